#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "wrapsim/config.hpp"
#include "wrapsim/recovery.hpp"
#include "wrapsim/trace.hpp"

namespace wrapsim {

struct Verdict {
  bool ok = true;
  std::string detail;

  static Verdict pass() { return {}; }
  static Verdict fail(std::string d) { return {false, std::move(d)}; }
};

using HomeImage = std::vector<uint64_t>;

// Brute-force enumeration of the consistent PM states of a committed trace:
// one image per dependency-closed subset of the commit order, write sets
// applied in commit order. Committed-wrap count is capped (default 20).
std::set<HomeImage> consistentStates(const MemLayout& layout,
                                     const std::vector<TxRecord>& committed,
                                     uint32_t bound = 20);

// Per-trace oracle over every crash point: membership of the recovered home
// image in the consistent-state set, per-wrap atomicity, strict-durability
// obligations, and the protocol lemmas as trace predicates.
class TraceChecker {
 public:
  TraceChecker(const MemLayout& layout, const Trace& trace, uint32_t oracleBound = 20);

  Verdict checkCrashConsistency(uint64_t crashTick) const;
  Verdict checkAllCrashPoints() const;  // every interesting tick, plus Lemma C3
  Verdict checkLemmas() const;          // C1, C2, C4

  // Commit-order serializability: replaying committed transactions' logical
  // operations over a fresh model memory reproduces every observed read.
  Verdict checkSerializability() const;

  // Crash-point checks enumerate the state set on first use; lemma and
  // serializability checks stay usable above the oracle bound.
  const std::set<HomeImage>& states() const;

 private:
  struct TxFacts {
    uint64_t firstHomePmWrite = 0;  // 0 = never
    uint64_t logDurableTick = 0;    // first durable end marker; 0 = never
  };

  void ensureOracle() const;
  Verdict checkOneCrash(uint64_t tick, const RecoveryReport& rep) const;
  std::vector<uint32_t> masksMatching(const HomeImage& img, uint32_t prefixMask) const;

  MemLayout layout_;
  const Trace& trace_;
  uint32_t oracleBound_;
  uint32_t n_ = 0;                        // committed tx count
  std::vector<uint32_t> precMask_;        // direct predecessor mask per tx
  std::vector<uint32_t> precClosure_;     // transitive
  std::vector<TxFacts> facts_;
  mutable bool oracleBuilt_ = false;
  mutable std::set<HomeImage> states_;
  mutable std::map<HomeImage, std::vector<uint32_t>> imageMasks_;
};

}  // namespace wrapsim
