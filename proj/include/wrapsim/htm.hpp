#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "wrapsim/cache.hpp"
#include "wrapsim/config.hpp"
#include "wrapsim/types.hpp"

namespace wrapsim {

class Engine;

// Restricted-transactional-memory emulation: speculative buffering, eager
// conflict detection at each access, and the global software fallback lock.
// The fallback lock is modeled as a pseudo-line present in every section's
// read set, so acquiring it non-speculatively aborts all active sections.
class Htm {
 public:
  static constexpr uint64_t kLockLine = ~uint64_t{0};

  struct Section {
    WrapId owner;
    uint32_t thread = 0;
    bool active = false;
    bool usingLock = false;
    int32_t reservedSeq = -1;  // lock-covered sections: commit slot, pre-assigned
    std::set<uint64_t> readSet;                     // includes kLockLine
    std::map<uint64_t, CacheLineValue> writeBuf;    // speculative values
    std::vector<LogEntry> writesOrdered;            // program order, duplicates kept
    std::vector<LogEntry> readsObserved;            // (line, value seen)
  };

  struct CommitInfo {
    int32_t txSeq = -1;
    std::vector<int32_t> directPrec;
    std::vector<LogEntry> writesOrdered;
    std::vector<LogEntry> readsObserved;
  };

  Htm(uint32_t threads, const HtmConfig& cfg, Cache& cache, uint64_t homeLines)
      : cfg_(cfg), cache_(cache), homeLines_(homeLines), sections_(threads) {}

  bool lockFree() const { return !lockHolder_.has_value(); }
  bool lockHeldBy(uint32_t t) const { return lockHolder_ == t; }
  void acquireLock(Engine& eng, uint32_t t);
  void releaseLock(uint32_t t);

  // Returns false (caller backs off) when the lock is held.
  bool tryBegin(uint32_t t, WrapId owner, bool underLock);
  CommitInfo end(Engine& eng, uint32_t t);
  void abort(Engine& eng, uint32_t t, HtmAbort::Reason why);
  [[noreturn]] void abortSelf(Engine& eng, uint32_t t, HtmAbort::Reason why);

  bool inSection(uint32_t t) const { return sections_[t].has_value() && sections_[t]->active; }
  Section* section(uint32_t t) { return sections_[t] ? &*sections_[t] : nullptr; }

  // Access interception. specStore/specRead run inside a section; the plain
  // forms are non-transactional and always win conflicts.
  void specStore(Engine& eng, uint32_t t, Address a, CacheLineValue v);
  CacheLineValue specRead(Engine& eng, uint32_t t, Address a);
  void plainStore(Engine& eng, uint32_t t, Address a, CacheLineValue v, int32_t producerTx = -1);
  CacheLineValue plainRead(Engine& eng, uint32_t t, Address a);

  uint64_t abortCount() const { return abortCount_; }
  int32_t committedCount() const { return nextTxSeq_; }

  void discardVolatile();

 private:
  void rollback(Engine& eng, uint32_t t, HtmAbort::Reason why);
  void conflictOnWrite(Engine& eng, uint32_t t, bool requesterInSection, uint64_t line);
  void conflictOnRead(Engine& eng, uint32_t t, bool requesterInSection, uint64_t line);
  CommitInfo bookkeepCommit(Section& s);

  HtmConfig cfg_;
  Cache& cache_;
  uint64_t homeLines_ = 0;
  std::vector<std::optional<Section>> sections_;
  std::optional<uint32_t> lockHolder_;
  uint64_t abortCount_ = 0;
  int32_t nextTxSeq_ = 0;

  // Committed-access history for precedence-edge extraction.
  std::map<uint64_t, int32_t> lastWriter_;
  std::map<uint64_t, std::vector<int32_t>> readersSince_;
};

}  // namespace wrapsim
