#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "wrapsim/types.hpp"

namespace wrapsim {

enum class EventKind : uint8_t {
  ThreadStep,   // one scheduled step of a simulated thread
  Evict,        // scheduler-chosen eviction delivered to the controller
  PmWrite,      // a line became durable in the PmImage
  VdbInsert,    // eviction parked in the delay buffer
  WrapOpen,     // controller open notification
  WrapClose,    // controller close notification
  HtmCommit,    // XEnd made a section's stores visible
  HtmAbort,
  StrictSignal,  // controller wrote 1 to a durability mailbox
  SoftWaitDone,  // software strict-durability scan completed
  CleanupDone,   // quiesce log cleanup finished
  Crash,
};

const char* to_string(EventKind k);

enum class PmWriteSource : uint8_t {
  PassThrough,  // log-range write, bypassed the VDB
  DirectHome,   // home write with empty COT
  VdbDrain,     // dependency set emptied, FIFO head written back
};

struct Event {
  uint64_t tick = 0;
  EventKind kind{};
  uint32_t thread = kNoThread;
  uint64_t line = 0;
  uint64_t value = 0;
  PmWriteSource source = PmWriteSource::PassThrough;
  int32_t producerTx = -1;  // committed transaction that produced the value, if any

  static constexpr uint32_t kNoThread = 0xffffffff;
};

// Committed-transaction bookkeeping fed to the recovery checker. Aborted HTM
// attempts leave no record here.
struct TxRecord {
  int32_t txSeq = -1;  // commit order index
  WrapId wrap;
  uint32_t slot = 0;
  Timestamp startTime;    // unset for HTM_ONLY transactions
  Timestamp persistTime;  // unset for HTM_ONLY transactions
  uint64_t commitTick = 0;
  uint64_t closeTick = 0;         // 0 until the close notification
  uint64_t strictSignalTick = 0;  // 0 unless a strict-durability signal fired
  std::vector<LogEntry> writeSet;             // home stores, program order
  std::vector<LogEntry> reads;                // home reads with observed values
  std::vector<int32_t> directPrec;            // txSeq of direct predecessors
};

struct Trace {
  std::vector<Event> events;
  std::vector<TxRecord> txs;
  bool crashed = false;
  uint64_t finalTick = 0;

  void exportJsonLines(std::ostream& os) const;
};

}  // namespace wrapsim
