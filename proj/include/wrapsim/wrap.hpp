#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "wrapsim/engine.hpp"
#include "wrapsim/task.hpp"
#include "wrapsim/types.hpp"

namespace wrapsim {

enum class Durability { Relaxed, StrictController, StrictSoftware };
enum class WrapState { Open, Compute, Log, Close, Commit, Done };

// Per-transaction handle. One live handle per simulated thread.
struct WrapTx {
  WrapId wrapId;
  uint32_t thread = 0;
  uint32_t slot = 0;
  WrapState state = WrapState::Open;
  Durability durability = Durability::Relaxed;
  Timestamp startTime;
  Timestamp persistTime;
  std::vector<LogEntry> writeSet;  // logical home writes, program order
  uint32_t retryCount = 0;
  bool usingLock = false;
  int32_t txSeq = -1;
  uint64_t beginTick = 0;
  uint64_t endTick = 0;
};

// User-level WrAP library: lifecycle OPEN -> COMPUTE -> LOG -> CLOSE ->
// COMMIT, log construction in the per-wrap slot ring, strict/relaxed
// durability, and quiesce-based log cleanup. Thread identifiers double as
// wrap identifiers; the active-transaction count is bounded by the thread
// count.
class WrapLib {
 public:
  explicit WrapLib(Engine& eng);

  struct Ctx {
    WrapLib& lib;
    uint32_t thread;
    WrapTx& tx;
    Co<void> store(uint64_t line, uint64_t value) {
      return lib.wrapStore(thread, tx, Address{line}, CacheLineValue{value});
    }
    Co<CacheLineValue> read(uint64_t line) { return lib.wrapRead(thread, tx, Address{line}); }
  };
  using Body = std::function<Co<void>(Ctx&)>;

  // Full lifecycle with HTM retry, backoff, and fallback-lock escalation.
  Co<void> runTransaction(uint32_t thread, Durability d, Body body);

  // Lifecycle pieces (also driven individually by scripted scenarios).
  Co<WrapTx> open(uint32_t thread);
  Co<void> htmBegin(uint32_t thread, WrapTx& tx);
  Co<void> wrapStore(uint32_t thread, WrapTx& tx, Address a, CacheLineValue v);
  Co<CacheLineValue> wrapRead(uint32_t thread, WrapTx& tx, Address a);
  Co<void> computeEnd(uint32_t thread, WrapTx& tx);  // persist-ts capture + XEnd
  Co<void> flushPersistRecord(uint32_t thread, WrapTx& tx);
  Co<void> flushWriteSetAndMarker(uint32_t thread, WrapTx& tx);
  Co<void> closeLog(uint32_t thread, WrapTx& tx);  // both flushes, single fence
  Co<void> closeNotify(uint32_t thread, WrapTx& tx);
  Co<void> softwareStrictWait(uint32_t thread, WrapTx& tx);

  // Quiesce: delay new opens, wait for all wraps to close, flush dirty home
  // lines, then clear consumed log records (ascending persistTime).
  Co<void> logCleanup(uint32_t thread);

  uint64_t cleanupCount() const { return cleanupCount_; }
  uint64_t committedCount() const { return committed_; }

 private:
  struct Status {  // software strict-durability status line per thread
    uint64_t start = 0;
    uint64_t persist = 0;
    bool open = false;
  };
  struct RecordRef {
    uint32_t thread;
    uint32_t slot;
    uint64_t persistTime;
  };

  uint64_t backoffDelay(uint32_t retryCount);

  Engine& eng_;
  std::vector<Status> status_;
  std::vector<uint32_t> nextSlot_;
  std::vector<bool> active_;
  std::vector<RecordRef> writtenRecords_;  // cleared by log cleanup
  bool cleanupActive_ = false;
  uint64_t cleanupCount_ = 0;
  uint64_t committed_ = 0;
};

}  // namespace wrapsim
