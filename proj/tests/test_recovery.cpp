#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"
#include "wrapsim/golden.hpp"
#include "wrapsim/recovery.hpp"
#include "wrapsim/wrap.hpp"

using namespace wrapsim;
using namespace wrapsim::testing;

TEST_CASE("golden controller walkthrough matches the transcribed table") {
  GoldenFig3Result res = runGoldenFig3();
  std::string diff = "actual:\n" + res.actualJson + "\nexpected:\n" + res.expectedJson;
  CHECK_MESSAGE(res.controllerMatch, diff);
}

TEST_CASE("golden recovery table: replay sets after every step") {
  GoldenFig3Result res = runGoldenFig3();
  REQUIRE(res.actualReplay.size() == res.expectedReplay.size());
  for (size_t i = 0; i < res.expectedReplay.size(); ++i)
    CHECK_MESSAGE(res.actualReplay[i] == res.expectedReplay[i],
                  "mismatch at step t" << (i + 1));
}

TEST_CASE("golden strict variant: T2 waits until T1 and T4 close") {
  GoldenFig3Result res = runGoldenFig3(/*t2Strict=*/true);
  auto j = nlohmann::json::parse(res.actualJson);
  // At t8 the closing wrap snapshots the remaining COT {1,0,0,1}.
  CHECK(j[7]["step"] == "t8");
  REQUIRE(j[7]["dwq"].size() == 1);
  CHECK(j[7]["dwq"][0]["ds"].get<std::vector<int>>() == std::vector<int>{1, 0, 0, 1});
  // Still waiting at t11, gone after t12.
  CHECK(j[10]["dwq"].size() == 1);
  CHECK(j[11]["dwq"].size() == 0);
}

namespace {

// The two-transaction race: A executes first, B persists its log and closes
// first. A's log never completes.
struct RaceResult {
  Trace trace;
  MemLayout layout;
  uint64_t crashTick = 0;
};

RaceResult runRace() {
  SimConfig cfg = smallCfg(2);
  ScheduleConfig sched = seeded(1);
  Engine eng(cfg, sched);
  WrapLib lib(eng);
  Gate gate(2);

  // A: w=3 (line 0), x=1 (line 1).  B: y=w+1 (line 2), z=1 (line 3).
  eng.addThread([&](Engine& e, uint32_t t) -> ThreadTask {
    WrapTx tx = co_await lib.open(t);
    co_await lib.htmBegin(t, tx);
    co_await lib.wrapStore(t, tx, Address{0}, CacheLineValue{3});
    co_await lib.wrapStore(t, tx, Address{1}, CacheLineValue{1});
    co_await gate.wait(e, t, 1);
    co_await lib.computeEnd(t, tx);  // HTM done; log never flushed
    co_await gate.wait(e, t, 2);
    co_await lib.closeLog(t, tx);
    co_await lib.closeNotify(t, tx);
  });
  eng.addThread([&](Engine& e, uint32_t t) -> ThreadTask {
    co_await gate.wait(e, t, 1);
    WrapTx tx = co_await lib.open(t);
    co_await lib.htmBegin(t, tx);
    CacheLineValue w = co_await lib.wrapRead(t, tx, Address{0});
    co_await lib.wrapStore(t, tx, Address{2}, CacheLineValue{w.word + 1});
    co_await lib.wrapStore(t, tx, Address{3}, CacheLineValue{1});
    co_await lib.computeEnd(t, tx);
    co_await lib.closeLog(t, tx);
    co_await lib.closeNotify(t, tx);
  });
  eng.start();
  pump(eng, 0);
  gate.openAndPump(eng, 0);  // A commits its HTM (persist ts captured)
  gate.openAndPump(eng, 1);  // B runs fully: reads w=3, logs, closes
  eng.directEvict(2);        // y leaves the cache; the controller parks it
  RaceResult r;
  r.crashTick = eng.clock();
  r.trace = eng.trace();
  r.trace.finalTick = eng.clock();
  r.layout = eng.layout();
  return r;
}

}  // namespace

TEST_CASE("neither racer replays when the earlier log is missing") {
  RaceResult r = runRace();
  PmImage img = injectCrash(r.layout, r.trace, r.crashTick);
  RecoveryReport rep = recover(img);
  CHECK(rep.replayed.empty());
  // B's update of y is buffered behind A in the delay buffer, so atomic
  // persistence holds: nothing of B reached the home region either.
  CHECK(rep.finalImage.read(Address{2}).word == 0);
  CHECK(rep.finalImage.read(Address{3}).word == 0);
}

TEST_CASE("recovery is idempotent") {
  GoldenFig3Result res = runGoldenFig3();
  PmImage img = injectCrash(res.layout, res.trace, res.stepTicks.back());
  RecoveryReport rep1 = recover(img);
  RecoveryReport rep2 = recover(rep1.finalImage);
  REQUIRE(rep1.replayed.size() == rep2.replayed.size());
  for (size_t i = 0; i < rep1.replayed.size(); ++i) {
    CHECK(rep1.replayed[i].wrap == rep2.replayed[i].wrap);
    CHECK(rep1.replayed[i].persistTime == rep2.replayed[i].persistTime);
  }
  CHECK(rep1.finalImage == rep2.finalImage);
}

TEST_CASE("replay order is ascending persistTime") {
  GoldenFig3Result res = runGoldenFig3();
  PmImage img = injectCrash(res.layout, res.trace, res.stepTicks.back());
  RecoveryReport rep = recover(img);
  for (size_t i = 1; i < rep.replayed.size(); ++i)
    CHECK(rep.replayed[i - 1].persistTime < rep.replayed[i].persistTime);
}

TEST_CASE("valid marker with corrupted body raises CORRUPT_LOG") {
  SimConfig cfg = smallCfg(1);
  MemLayout layout = MemLayout::from(cfg);
  PmImage img(layout);
  // Hand-craft a complete record, then corrupt one write-set word.
  std::vector<LogEntry> ws{{Address{1}, CacheLineValue{11}}};
  img.write(layout.slotLine(WrapId{0}, 0, 0), CacheLineValue{5});
  img.write(layout.slotLine(WrapId{0}, 0, 1), CacheLineValue{9});
  img.write(layout.slotLine(WrapId{0}, 0, 2), CacheLineValue{1});
  img.write(layout.slotLine(WrapId{0}, 0, 3), CacheLineValue{11});
  img.write(layout.markerLine(WrapId{0}, 0),
            CacheLineValue{packMarker(1, logChecksum(Timestamp{5}, Timestamp{9}, ws))});
  CHECK(recover(img).replayed.size() == 1);
  img.write(layout.slotLine(WrapId{0}, 0, 3), CacheLineValue{12});
  CHECK_THROWS_AS(recover(img), SimError);
}

TEST_CASE("empty incomplete set replays every complete log") {
  // Two disjoint wraps run to completion; crash at the very end.
  SimConfig cfg = smallCfg(2);
  Engine eng(cfg, seeded(9));
  WrapLib lib(eng);
  for (uint32_t t = 0; t < 2; ++t) {
    eng.addThread([&lib](Engine& e, uint32_t tt) -> ThreadTask {
      co_await lib.runTransaction(tt, Durability::Relaxed,
                                  [tt](WrapLib::Ctx& c) -> Co<void> {
                                    co_await c.store(tt, tt + 7);
                                  });
    });
  }
  RandomOracle oracle(9, 0.0);
  eng.run(oracle);
  Trace trace = eng.trace();
  trace.finalTick = eng.clock();
  RecoveryReport rep = recover(injectCrash(eng.layout(), trace, eng.clock()));
  CHECK(rep.tMinInfinite);
  CHECK(rep.replayed.size() == 2);
}

TEST_CASE("PmImage snapshot round-trips through the binary format") {
  GoldenFig3Result res = runGoldenFig3();
  PmImage img = injectCrash(res.layout, res.trace, res.stepTicks[8]);  // after t9
  std::stringstream ss;
  img.save(ss);
  PmImage back = PmImage::load(ss);
  CHECK(back == img);
  RecoveryReport a = recover(img);
  RecoveryReport b = recover(back);
  CHECK(a.replayed.size() == b.replayed.size());
}
