#include "doctest.h"
#include "helpers.hpp"
#include "wrapsim/golden.hpp"
#include "wrapsim/recovery.hpp"
#include "wrapsim/wrap.hpp"

using namespace wrapsim;
using namespace wrapsim::testing;

namespace {

struct WrapFixture {
  SimConfig cfg;
  ScheduleConfig sched;
  Engine eng;
  WrapLib lib;

  explicit WrapFixture(uint32_t threads, uint64_t seed = 1)
      : cfg(smallCfg(threads)), sched(seeded(seed)), eng(cfg, sched), lib(eng) {}
};

ThreadTask simpleWrap(Engine& eng, WrapLib& lib, uint32_t t,
                      std::vector<std::pair<uint64_t, uint64_t>> writes,
                      Durability d = Durability::Relaxed) {
  (void)eng;
  co_await lib.runTransaction(t, d, [writes](WrapLib::Ctx& c) -> Co<void> {
    for (auto [line, value] : writes) co_await c.store(line, value);
  });
}

}  // namespace

TEST_CASE("single wrap lifecycle: log record, timestamps, replayability") {
  WrapFixture f(1);
  f.eng.addThread([&f](Engine& e, uint32_t t) {
    return simpleWrap(e, f.lib, t, {{2, 22}, {3, 33}});
  });
  RandomOracle oracle(1, 0.0);
  f.eng.run(oracle);

  auto rec = f.eng.pm().parseSlot(WrapId{0}, 0);
  REQUIRE(rec.has_value());
  CHECK(rec->endMarker);
  CHECK(rec->startTime.valid());
  CHECK(rec->persistTime.valid());
  CHECK(rec->startTime < rec->persistTime);
  REQUIRE(rec->writeSet.size() == 2);
  CHECK(rec->writeSet[0].addr.line == 2);
  CHECK(rec->writeSet[0].value.word == 22);
  CHECK(rec->writeSet[1].addr.line == 3);

  // persistTime precedes every later timestamp in the run.
  const TxRecord& tx = f.eng.trace().txs.at(0);
  CHECK(tx.persistTime.value < tx.closeTick);

  // Crash at the end: recovery replays the wrap.
  Trace trace = f.eng.trace();
  trace.finalTick = f.eng.clock();
  RecoveryReport rep = recover(injectCrash(f.eng.layout(), trace, trace.finalTick));
  REQUIRE(rep.replayed.size() == 1);
  CHECK(rep.finalImage.read(Address{2}).word == 22);
  CHECK(rep.finalImage.read(Address{3}).word == 33);
}

TEST_CASE("crash right after open leaves an incomplete header-only record") {
  WrapFixture f(1);
  f.eng.addThread([&f](Engine& e, uint32_t t) {
    return simpleWrap(e, f.lib, t, {{1, 1}});
  });
  f.eng.start();
  // Run only the open part: stop as soon as the header became durable.
  Address header = f.eng.layout().slotLine(WrapId{0}, 0, 0);
  while (f.eng.pm().read(header).word == 0) {
    ActionMenu m = f.eng.menu();
    REQUIRE(!m.runnable.empty());
    f.eng.directThreadStep(m.runnable[0]);
  }
  Trace trace = f.eng.trace();
  trace.finalTick = f.eng.clock();
  RecoveryReport rep = recover(injectCrash(f.eng.layout(), trace, f.eng.clock()));
  REQUIRE(rep.incompleteSet.size() == 1);
  CHECK(rep.incompleteSet[0].startTime.valid());
  CHECK(!rep.incompleteSet[0].persistTime.valid());
  CHECK(rep.replayed.empty());
}

TEST_CASE("zero-store wrap is still a valid transaction") {
  WrapFixture f(1);
  f.eng.addThread([&f](Engine& e, uint32_t t) { return simpleWrap(e, f.lib, t, {}); });
  RandomOracle oracle(1, 0.0);
  f.eng.run(oracle);
  auto rec = f.eng.pm().parseSlot(WrapId{0}, 0);
  REQUIRE(rec.has_value());
  CHECK(rec->endMarker);
  CHECK(rec->writeSet.empty());
  Trace trace = f.eng.trace();
  trace.finalTick = f.eng.clock();
  RecoveryReport rep = recover(injectCrash(f.eng.layout(), trace, f.eng.clock()));
  CHECK(rep.replayed.size() == 1);
}

TEST_CASE("same address twice: both entries logged, replay is last-wins") {
  WrapFixture f(1);
  f.eng.addThread([&f](Engine& e, uint32_t t) {
    return simpleWrap(e, f.lib, t, {{4, 1}, {4, 9}});
  });
  RandomOracle oracle(1, 0.0);
  f.eng.run(oracle);
  auto rec = f.eng.pm().parseSlot(WrapId{0}, 0);
  REQUIRE(rec.has_value());
  CHECK(rec->writeSet.size() == 2);
  Trace trace = f.eng.trace();
  trace.finalTick = f.eng.clock();
  RecoveryReport rep = recover(injectCrash(f.eng.layout(), trace, f.eng.clock()));
  CHECK(rep.finalImage.read(Address{4}).word == 9);
}

namespace {

ThreadTask gatedWrap(Engine& eng, WrapLib& lib, uint32_t t, Gate& gate, Durability d,
                     uint64_t line, bool* done) {
  (void)eng;
  co_await gate.wait(eng, t, 1);
  WrapTx tx = co_await lib.open(t);
  tx.durability = d;
  co_await lib.htmBegin(t, tx);
  co_await lib.wrapStore(t, tx, Address{line}, CacheLineValue{line + 1});
  co_await gate.wait(eng, t, 2);
  co_await lib.computeEnd(t, tx);
  co_await lib.closeLog(t, tx);
  co_await lib.closeNotify(t, tx);
  *done = true;
}

}  // namespace

TEST_CASE("controller-strict commit blocks until overlapping wraps close") {
  WrapFixture f(2);
  Gate gate(2);
  bool done0 = false, done1 = false;
  f.eng.addThread([&](Engine& e, uint32_t t) {
    return gatedWrap(e, f.lib, t, gate, Durability::StrictController, 1, &done0);
  });
  f.eng.addThread([&](Engine& e, uint32_t t) {
    return gatedWrap(e, f.lib, t, gate, Durability::Relaxed, 2, &done1);
  });
  f.eng.start();
  gate.openAndPump(f.eng, 0);  // open both
  gate.openAndPump(f.eng, 1);
  gate.openAndPump(f.eng, 0);  // thread 0 closes strict while thread 1 is open
  CHECK(!done0);               // blocked on its durability mailbox
  gate.openAndPump(f.eng, 1);  // thread 1 closes: DWQ signals
  pump(f.eng, 0);
  CHECK(done0);
  CHECK(done1);
  const TxRecord& tx0 = f.eng.trace().txs.at(0);
  CHECK(tx0.strictSignalTick != 0);
}

TEST_CASE("software strict wait mirrors the controller gate") {
  WrapFixture f(2);
  Gate gate(2);
  bool done0 = false, done1 = false;
  f.eng.addThread([&](Engine& e, uint32_t t) {
    return gatedWrap(e, f.lib, t, gate, Durability::StrictSoftware, 1, &done0);
  });
  f.eng.addThread([&](Engine& e, uint32_t t) {
    return gatedWrap(e, f.lib, t, gate, Durability::Relaxed, 2, &done1);
  });
  f.eng.start();
  gate.openAndPump(f.eng, 0);
  gate.openAndPump(f.eng, 1);
  gate.openAndPump(f.eng, 0);  // closes, then scans: thread 1 still open+earlier
  CHECK(!done0);
  gate.openAndPump(f.eng, 1);
  pump(f.eng, 0);
  CHECK(done0);
}

TEST_CASE("software strict wait returns immediately for a lone thread") {
  WrapFixture f(1);
  bool done = false;
  Gate gate(1);
  f.eng.addThread([&](Engine& e, uint32_t t) {
    return gatedWrap(e, f.lib, t, gate, Durability::StrictSoftware, 1, &done);
  });
  f.eng.start();
  gate.openAndPump(f.eng, 0);
  gate.openAndPump(f.eng, 0);
  CHECK(done);
}

TEST_CASE("strict gate never opens before the wrap is replay-guaranteed") {
  // Both strict flavors: at the signal tick, recovery must already replay
  // the signaled wrap on any crash at or after it.
  for (Durability d : {Durability::StrictController, Durability::StrictSoftware}) {
    for (uint64_t seed : {3ull, 4ull, 5ull}) {
      WrapFixture f(3, seed);
      for (uint32_t t = 0; t < 3; ++t) {
        f.eng.addThread([&f, d](Engine& e, uint32_t tt) {
          return simpleWrap(e, f.lib, tt, {{tt, tt + 1}, {3 + tt, tt + 10}}, d);
        });
      }
      RandomOracle oracle(seed, 0.2);
      f.eng.run(oracle);
      Trace trace = f.eng.trace();
      trace.finalTick = f.eng.clock();
      for (const TxRecord& tx : trace.txs) {
        REQUIRE(tx.strictSignalTick != 0);
        RecoveryReport rep =
            recover(injectCrash(f.eng.layout(), trace, tx.strictSignalTick));
        bool found = false;
        for (const auto& r : rep.replayed)
          if (r.wrap == tx.wrap && r.persistTime == tx.persistTime) found = true;
        CHECK_MESSAGE(found, "wrap signaled before it was replay-guaranteed");
      }
    }
  }
}

TEST_CASE("duplicate open on one thread is rejected") {
  WrapFixture f(1);
  bool threw = false;
  f.eng.addThread([&](Engine& e, uint32_t t) -> ThreadTask {
    WrapTx tx = co_await f.lib.open(t);
    try {
      WrapTx tx2 = co_await f.lib.open(t);
      (void)tx2;
    } catch (const SimError& err) {
      threw = err.code() == Err::DuplicateOpen;
    }
    co_await f.lib.htmBegin(t, tx);
    co_await f.lib.computeEnd(t, tx);
    co_await f.lib.closeLog(t, tx);
    co_await f.lib.closeNotify(t, tx);
  });
  RandomOracle oracle(1, 0.0);
  f.eng.run(oracle);
  CHECK(threw);
}

TEST_CASE("wrapStore outside COMPUTE is a protocol violation") {
  WrapFixture f(1);
  bool threw = false;
  f.eng.addThread([&](Engine& e, uint32_t t) -> ThreadTask {
    WrapTx tx = co_await f.lib.open(t);
    co_await f.lib.htmBegin(t, tx);
    co_await f.lib.computeEnd(t, tx);
    try {
      co_await f.lib.wrapStore(t, tx, Address{0}, CacheLineValue{1});
    } catch (const SimError& err) {
      threw = err.code() == Err::ProtocolViolation;
    }
    co_await f.lib.closeLog(t, tx);
    co_await f.lib.closeNotify(t, tx);
  });
  RandomOracle oracle(1, 0.0);
  f.eng.run(oracle);
  CHECK(threw);
}

TEST_CASE("log cleanup runs between transactions and clears consumed records") {
  SimConfig cfg = smallCfg(2);
  cfg.logSlotsPerWrap = 2;  // third transaction per thread forces a quiesce
  ScheduleConfig sched = seeded(5);
  Engine eng(cfg, sched);
  WrapLib lib(eng);
  for (uint32_t t = 0; t < 2; ++t) {
    eng.addThread([&lib](Engine& e, uint32_t tt) -> ThreadTask {
      for (uint64_t i = 0; i < 3; ++i) {
        co_await lib.runTransaction(tt, Durability::Relaxed,
                                    [tt, i](WrapLib::Ctx& c) -> Co<void> {
                                      co_await c.store(tt * 4 + i, 100 + i);
                                    });
      }
    });
  }
  RandomOracle oracle(5, 0.1);
  eng.run(oracle);
  CHECK(lib.cleanupCount() >= 1);
  // After the final close, earlier records were cleared by the quiesce;
  // remaining complete records replay cleanly over the flushed image.
  Trace trace = eng.trace();
  trace.finalTick = eng.clock();
  RecoveryReport rep = recover(injectCrash(eng.layout(), trace, eng.clock()));
  for (uint64_t t = 0; t < 2; ++t)
    for (uint64_t i = 0; i < 3; ++i)
      CHECK(rep.finalImage.read(Address{t * 4 + i}).word == 100 + i);
}

TEST_CASE("crash after a clean quiesce: nothing replays, image already consistent") {
  SimConfig cfg = smallCfg(1);
  ScheduleConfig sched = seeded(6);
  Engine eng(cfg, sched);
  WrapLib lib(eng);
  eng.addThread([&lib](Engine& e, uint32_t t) -> ThreadTask {
    co_await lib.runTransaction(t, Durability::Relaxed, [](WrapLib::Ctx& c) -> Co<void> {
      co_await c.store(0, 5);
      co_await c.store(1, 6);
    });
    co_await lib.logCleanup(t);
  });
  RandomOracle oracle(6, 0.0);
  eng.run(oracle);
  Trace trace = eng.trace();
  trace.finalTick = eng.clock();
  RecoveryReport rep = recover(injectCrash(eng.layout(), trace, eng.clock()));
  CHECK(rep.replayed.empty());
  CHECK(rep.incompleteSet.empty());
  CHECK(rep.finalImage.read(Address{0}).word == 5);
  CHECK(rep.finalImage.read(Address{1}).word == 6);
}

TEST_CASE("opens are delayed while a cleanup is pending") {
  WrapFixture f(2);
  Gate gate(2);
  bool opened1 = false;
  f.eng.addThread([&](Engine& e, uint32_t t) -> ThreadTask {
    // Holds a wrap open, then closes; afterwards runs a cleanup.
    WrapTx tx = co_await f.lib.open(t);
    co_await f.lib.htmBegin(t, tx);
    co_await gate.wait(e, t, 1);
    co_await f.lib.computeEnd(t, tx);
    co_await f.lib.closeLog(t, tx);
    co_await f.lib.closeNotify(t, tx);
  });
  f.eng.addThread([&](Engine& e, uint32_t t) -> ThreadTask {
    co_await gate.wait(e, t, 1);
    co_await f.lib.logCleanup(t);
    WrapTx tx = co_await f.lib.open(t);
    opened1 = true;
    co_await f.lib.htmBegin(t, tx);
    co_await f.lib.computeEnd(t, tx);
    co_await f.lib.closeLog(t, tx);
    co_await f.lib.closeNotify(t, tx);
  });
  f.eng.start();
  pump(f.eng, 0);              // thread 0 opens and parks at the gate
  gate.openAndPump(f.eng, 1);  // thread 1 starts a cleanup: must wait for COT
  CHECK(!opened1);
  gate.openAndPump(f.eng, 0);  // thread 0 closes; cleanup can proceed
  pumpAll(f.eng);
  CHECK(opened1);
}
