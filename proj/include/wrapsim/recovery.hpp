#pragma once

#include <cstdint>
#include <vector>

#include "wrapsim/pm_image.hpp"
#include "wrapsim/trace.hpp"
#include "wrapsim/types.hpp"

namespace wrapsim {

struct ReplayedTx {
  WrapId wrap;
  uint32_t slot = 0;
  Timestamp startTime;
  Timestamp persistTime;
};

struct RecoveryReport {
  std::vector<LogRecord> incompleteSet;  // started, no valid end marker
  std::vector<LogRecord> completeSet;
  Timestamp tMin;  // min startTime over unordered records; 0 encodes +infinity
  bool tMinInfinite = false;
  std::vector<ReplayedTx> replayed;  // ascending persistTime
  PmImage finalImage;
};

// Scans the log area of a crash snapshot, classifies records, and replays
// the write sets of qualifying complete records in ascending persistTime
// order. A record qualifies when (i) every record whose persist timestamp
// never became durable started after it, and (ii) every record with a
// smaller durable persist timestamp is itself complete. Dependent
// transactions persist in commit order, so the replayed set is closed under
// precedence.
RecoveryReport recover(const PmImage& image);

// PmImage exactly as of `tick`: initial contents plus every durable write
// with tick <= the crash point. Volatile state is gone by construction.
PmImage injectCrash(const MemLayout& layout, const Trace& trace, uint64_t tick);

// Crash points where the recovered state can change: durable writes, HTM
// commits, strict signals, closes. Used to cover "all crash ticks" without
// re-checking identical states.
std::vector<uint64_t> interestingCrashTicks(const Trace& trace);

}  // namespace wrapsim
