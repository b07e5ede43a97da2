#pragma once

#include <cstdint>

#include "wrapsim/types.hpp"

namespace wrapsim {

// Abstract latency model, all costs in simulated ticks. A PM write is a
// multiple of the (implicit, unit) DRAM write.
struct CostModel {
  uint64_t stepCost = 1;
  uint64_t pmWriteCost = 4;
  uint64_t fenceCost = 2;
};

enum class ConflictPolicy { RequesterWins, HolderWins };

struct HtmConfig {
  uint32_t retryThreshold = 8;    // aborts before falling back to the lock
  uint32_t maxBackoffShift = 10;  // caps 2^retryCount backoff growth
  ConflictPolicy policy = ConflictPolicy::RequesterWins;
};

// Test-only fault knobs. Used to demonstrate that the checker catches
// protocol mutations; never enabled in normal runs.
struct Mutations {
  bool drainImmediately = false;  // controller ignores COT, writes evictions straight to PM
  bool skipLogFence = false;      // close path skips flushing/fencing the log record
};

enum class CrashPolicy { None, AtTick, Random };

struct ScheduleConfig {
  uint64_t seed = 1;
  double evictionRate = 0.05;  // per-iteration probability of an eviction event
  CrashPolicy crashPolicy = CrashPolicy::None;
  uint64_t crashTick = 0;         // CrashPolicy::AtTick: stop once the clock reaches this
  uint64_t crashTickBound = 0;    // CrashPolicy::Random: uniform in [0, bound]; 0 = trace length heuristic
};

enum class TraceLevel { Full, MetricsOnly };

struct SimConfig {
  uint32_t threads = 1;
  uint64_t homeLines = 1 << 16;
  uint32_t cacheCapacity = 4096;
  uint32_t writeSetCapacity = 64;  // log entries per slot; hard per-transaction bound
  uint32_t logSlotsPerWrap = 64;   // ring depth before a quiesce log cleanup is forced
  CostModel costs;
  HtmConfig htm;
  Mutations mutations;
  TraceLevel traceLevel = TraceLevel::Full;

  void validate() const {
    if (threads == 0 || threads > kMaxWraps)
      throw SimError(Err::ConfigError, "thread count must be in [1, " +
                                           std::to_string(kMaxWraps) + "]");
    if (homeLines == 0 || writeSetCapacity == 0 || logSlotsPerWrap == 0)
      throw SimError(Err::ConfigError, "zero-sized memory layout");
  }
};

// Line layout of the simulated physical space. HOME lines first, then the
// reserved pass-through LOG range: per-wrap rings of fixed-size log slots
// followed by per-thread PTL undo areas.
//
// Log slot (slotLines() lines):
//   [0] startTime   [1] persistTime   [2+2k] entry k address  [3+2k] entry k value
//   [slotLines()-1] end marker: magic(16) | entryCount(16) | checksum(32)
//
// PTL undo area (ptlLines() lines):
//   [0] status (0 idle, 1 active)  [1] entry count  [2+2k]/[3+2k] entry k (addr, old value)
struct MemLayout {
  uint64_t homeLines = 0;
  uint32_t threads = 0;
  uint32_t writeSetCapacity = 0;
  uint32_t slotsPerWrap = 0;

  friend bool operator==(const MemLayout&, const MemLayout&) = default;

  static MemLayout from(const SimConfig& cfg) {
    return MemLayout{cfg.homeLines, cfg.threads, cfg.writeSetCapacity, cfg.logSlotsPerWrap};
  }

  uint64_t slotLines() const { return 3 + 2ull * writeSetCapacity; }
  uint64_t ptlLines() const { return 2 + 2ull * writeSetCapacity; }
  uint64_t logBase() const { return homeLines; }
  uint64_t wrapLogLines() const { return uint64_t{threads} * slotsPerWrap * slotLines(); }
  uint64_t ptlBase() const { return logBase() + wrapLogLines(); }
  uint64_t totalLines() const { return ptlBase() + uint64_t{threads} * ptlLines(); }

  Region region(Address a) const { return a.line < homeLines ? Region::Home : Region::Log; }

  Address slotLine(WrapId w, uint32_t slot, uint64_t offset) const {
    return Address{logBase() + (uint64_t{w.id} * slotsPerWrap + slot) * slotLines() + offset};
  }
  Address markerLine(WrapId w, uint32_t slot) const {
    return slotLine(w, slot, slotLines() - 1);
  }
  Address ptlLine(uint32_t thread, uint64_t offset) const {
    return Address{ptlBase() + uint64_t{thread} * ptlLines() + offset};
  }
};

inline constexpr uint64_t kLogMarkerMagic = 0xC0DA;

}  // namespace wrapsim
