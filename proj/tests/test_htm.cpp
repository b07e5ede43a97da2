#include "doctest.h"
#include "helpers.hpp"
#include "wrapsim/checker.hpp"
#include "wrapsim/engine.hpp"
#include "wrapsim/workloads.hpp"

using namespace wrapsim;
using namespace wrapsim::testing;

namespace {

struct Shared {
  Gate gate;
  uint64_t observedW = 0, observedX = 0;
  bool writerAborted = false;
  bool writerCommitted = false;
  explicit Shared(uint32_t threads) : gate(threads) {}
};

// One-shot speculative writer: stores w (line 0) and x (line 1), parks
// between phases, records whether it aborted or committed.
ThreadTask writer(Engine& eng, uint32_t t, Shared* sh) {
  bool aborted = false;
  try {
    co_await sh->gate.wait(eng, t, 1);
    co_await eng.tick(t, TickKind::Local);
    eng.htm().tryBegin(t, WrapId{t}, false);
    co_await eng.tick(t, TickKind::Access);
    eng.memStore(t, Address{0}, CacheLineValue{1});
    co_await sh->gate.wait(eng, t, 2);
    co_await eng.tick(t, TickKind::Access);
    eng.memStore(t, Address{1}, CacheLineValue{1});
    co_await sh->gate.wait(eng, t, 3);
    co_await eng.tick(t, TickKind::Commit);
    eng.htm().end(eng, t);
    sh->writerCommitted = true;
  } catch (const HtmAbort&) {
    aborted = true;
  }
  sh->writerAborted = aborted;
}

ThreadTask observer(Engine& eng, uint32_t t, Shared* sh) {
  co_await sh->gate.wait(eng, t, 1);
  co_await eng.tick(t, TickKind::Access);
  sh->observedW = eng.memRead(t, Address{0}).word;
  co_await eng.tick(t, TickKind::Access);
  sh->observedX = eng.memRead(t, Address{1}).word;
}

}  // namespace

TEST_CASE("mid-section reads see nothing and abort the speculative holder") {
  Engine eng(smallCfg(2), seeded(1));
  Shared sh(2);
  eng.addThread([&sh](Engine& e, uint32_t t) { return writer(e, t, &sh); });
  eng.addThread([&sh](Engine& e, uint32_t t) { return observer(e, t, &sh); });
  eng.start();

  sh.gate.openAndPump(eng, 0);  // begin + speculative store of w
  sh.gate.openAndPump(eng, 0);  // speculative store of x
  sh.gate.openAndPump(eng, 1);  // non-transactional reads of w and x
  CHECK(sh.observedW == 0);     // speculation was invisible
  CHECK(sh.observedX == 0);
  CHECK(eng.htm().abortCount() == 1);  // and the reads aborted the holder
  CHECK(!eng.htm().inSection(0));
  sh.gate.openAndPump(eng, 0);  // victim resumes and unwinds
  CHECK(sh.writerAborted);
  CHECK(!sh.writerCommitted);
  CHECK(eng.pm().read(Address{0}).word == 0);
  CHECK(eng.cache().dirtyEvictableLines(true).empty());
}

TEST_CASE("committed stores become visible together at XEnd") {
  Engine eng(smallCfg(2), seeded(1));
  Shared sh(2);
  eng.addThread([&sh](Engine& e, uint32_t t) { return writer(e, t, &sh); });
  eng.addThread([&sh](Engine& e, uint32_t t) { return observer(e, t, &sh); });
  eng.start();
  sh.gate.openAndPump(eng, 0);
  sh.gate.openAndPump(eng, 0);
  sh.gate.openAndPump(eng, 0);  // commit first
  CHECK(sh.writerCommitted);
  sh.gate.openAndPump(eng, 1);  // then observe
  CHECK(sh.observedW == 1);
  CHECK(sh.observedX == 1);
}

TEST_CASE("empty section commits as a no-op") {
  Engine eng(smallCfg(1), seeded(1));
  eng.addThread([](Engine& e, uint32_t t) -> ThreadTask {
    co_await e.tick(t, TickKind::Local);
    e.htm().tryBegin(t, WrapId{t}, false);
    co_await e.tick(t, TickKind::Commit);
    e.htm().end(e, t);
  });
  eng.start();
  pumpAll(eng);
  CHECK(eng.htm().committedCount() == 1);
  CHECK(eng.htm().abortCount() == 0);
}

namespace {

// Two conflicting increment transactions under the full workload path.
RunMetrics conflictRun(ConflictPolicy policy, uint64_t seed, RunArtifacts* art = nullptr) {
  WorkloadSpec spec;
  spec.kind = WorkloadKind::CounterVector;
  spec.threads = 4;
  spec.txCount = 24;
  spec.writesPerTx = 3;
  spec.tableLines = 2;  // heavy contention
  spec.seed = seed;
  SimConfig base;
  base.htm.policy = policy;
  ScheduleConfig sched = seeded(seed);
  sched.evictionRate = 0.1;
  return runWorkload(spec, sched, Method::Wrap, &base, art);
}

}  // namespace

TEST_CASE("conflicting sections serialize under both policies") {
  for (ConflictPolicy policy : {ConflictPolicy::RequesterWins, ConflictPolicy::HolderWins}) {
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
      RunArtifacts art;
      RunMetrics m = conflictRun(policy, seed, &art);
      CHECK(m.committedTx == 24);
      TraceChecker checker(art.layout, art.trace);
      Verdict v = checker.checkSerializability();
      CHECK_MESSAGE(v.ok, v.detail);
      // Increment-only workload: the final sum equals total increments.
      uint64_t sum = 0;
      for (uint64_t l = 0; l < 2; ++l) sum += art.finalHome[l];
      CHECK(sum == 24 * 3);
    }
  }
}

TEST_CASE("disjoint sections proceed unrestricted") {
  WorkloadSpec spec;
  spec.kind = WorkloadKind::CounterVector;
  spec.threads = 2;
  spec.txCount = 8;
  spec.writesPerTx = 1;
  spec.tableLines = 2;
  spec.seed = 42;
  // Per-thread rngs draw from disjoint streams; force disjoint lines by
  // using a single-line table per thread via the hashtable kind instead.
  WorkloadSpec hspec;
  hspec.kind = WorkloadKind::Hashtable;
  hspec.threads = 2;
  hspec.txCount = 8;
  hspec.writesPerTx = 1;
  hspec.tableLines = 1 << 10;  // collisions unlikely
  hspec.seed = 42;
  RunMetrics m = runWorkload(hspec, seeded(42), Method::Wrap);
  CHECK(m.committedTx == 8);
  CHECK(m.aborts == 0);
}

TEST_CASE("speculative writes vanish at a crash") {
  SimConfig cfg = smallCfg(1);
  ScheduleConfig sched = seeded(2);
  sched.crashPolicy = CrashPolicy::AtTick;
  sched.crashTick = 8;  // mid-section
  Engine eng(cfg, sched);
  eng.addThread([](Engine& e, uint32_t t) -> ThreadTask {
    co_await e.tick(t, TickKind::Local);
    e.htm().tryBegin(t, WrapId{t}, false);
    for (uint64_t l = 0; l < 4; ++l) {
      co_await e.tick(t, TickKind::Access);
      e.memStore(t, Address{l}, CacheLineValue{5});
    }
    co_await e.tick(t, TickKind::Commit);
    e.htm().end(e, t);
  });
  RandomOracle oracle(2, 0.5);
  eng.run(oracle);
  CHECK(eng.crashed());
  for (uint64_t l = 0; l < 4; ++l) CHECK(eng.pm().read(Address{l}).word == 0);
}

TEST_CASE("capacity abort escalates to the fallback lock and completes") {
  WorkloadSpec spec;
  spec.kind = WorkloadKind::Hashtable;
  spec.threads = 1;
  spec.txCount = 1;
  spec.writesPerTx = 8;
  spec.tableLines = 64;
  spec.seed = 3;
  SimConfig base;
  base.cacheCapacity = 4;  // speculative footprint bound
  base.writeSetCapacity = 16;
  RunMetrics m = runWorkload(spec, seeded(3), Method::Wrap, &base);
  CHECK(m.committedTx == 1);
  CHECK(m.aborts >= 1);
}

TEST_CASE("log overflow escalates to the fallback lock and completes") {
  WorkloadSpec spec;
  spec.kind = WorkloadKind::Hashtable;
  spec.threads = 1;
  spec.txCount = 1;
  spec.writesPerTx = 12;
  spec.tableLines = 64;
  spec.seed = 3;
  SimConfig base;
  base.writeSetCapacity = 12;  // slot fits; speculative attempt fits too
  base.cacheCapacity = 8;      // capacity abort first, then the lock path
  RunMetrics m = runWorkload(spec, seeded(3), Method::Wrap, &base);
  CHECK(m.committedTx == 1);
}

TEST_CASE("no section commits while the fallback lock is held") {
  // High contention with a tiny retry threshold exercises the lock path;
  // the serializability oracle plus commit accounting cover exclusion.
  WorkloadSpec spec;
  spec.kind = WorkloadKind::CounterVector;
  spec.threads = 4;
  spec.txCount = 16;
  spec.writesPerTx = 2;
  spec.tableLines = 1;
  spec.seed = 17;
  SimConfig base;
  base.htm.retryThreshold = 1;
  RunArtifacts art;
  RunMetrics m = runWorkload(spec, seeded(17), Method::Wrap, &base, &art);
  CHECK(m.committedTx == 16);
  CHECK(art.finalHome[0] == 16 * 2);
  TraceChecker checker(art.layout, art.trace);
  CHECK(checker.checkSerializability().ok);
}
