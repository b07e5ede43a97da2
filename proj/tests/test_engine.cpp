#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"
#include "wrapsim/engine.hpp"
#include "wrapsim/recovery.hpp"
#include "wrapsim/workloads.hpp"

using namespace wrapsim;
using namespace wrapsim::testing;

TEST_CASE("now() starts at 1 and strictly increases") {
  Engine eng(smallCfg(1), seeded(1));
  CHECK(eng.now().value == 1);
  Timestamp a = eng.now();
  Timestamp b = eng.now();
  CHECK(a < b);
}

namespace {

ThreadTask storerBody(Engine& eng, uint32_t t, uint64_t line) {
  co_await eng.tick(t, TickKind::Access);
  eng.memStore(t, Address{line}, CacheLineValue{t + 1});
  co_await eng.tick(t, TickKind::Access);
  eng.memStore(t, Address{line + 1}, CacheLineValue{t + 100});
}

}  // namespace

TEST_CASE("identical seed and workload reproduce identical traces") {
  auto runOnce = [](uint64_t seed) {
    WorkloadSpec spec;
    spec.kind = WorkloadKind::CounterVector;
    spec.threads = 2;
    spec.txCount = 8;
    spec.writesPerTx = 3;
    spec.tableLines = 8;
    spec.seed = seed;
    ScheduleConfig sched = seeded(seed);
    sched.evictionRate = 0.3;
    RunArtifacts art;
    runWorkload(spec, sched, Method::Wrap, nullptr, &art);
    return art;
  };
  RunArtifacts a = runOnce(7), b = runOnce(7), c = runOnce(8);
  REQUIRE(a.trace.events.size() == b.trace.events.size());
  for (size_t i = 0; i < a.trace.events.size(); ++i) {
    CHECK(a.trace.events[i].tick == b.trace.events[i].tick);
    CHECK(a.trace.events[i].kind == b.trace.events[i].kind);
    CHECK(a.trace.events[i].line == b.trace.events[i].line);
    CHECK(a.trace.events[i].value == b.trace.events[i].value);
  }
  CHECK(a.finalHome == b.finalHome);
  // Different seed takes a different path (schedule-level, not state-level).
  CHECK(a.trace.events.size() != c.trace.events.size());
}

TEST_CASE("trace ticks strictly increase") {
  WorkloadSpec spec;
  spec.kind = WorkloadKind::Hashtable;
  spec.threads = 3;
  spec.txCount = 9;
  spec.writesPerTx = 2;
  spec.tableLines = 16;
  spec.seed = 5;
  ScheduleConfig sched = seeded(5);
  sched.evictionRate = 0.25;
  RunArtifacts art;
  runWorkload(spec, sched, Method::Wrap, nullptr, &art);
  REQUIRE(art.trace.events.size() > 10);
  for (size_t i = 1; i < art.trace.events.size(); ++i)
    CHECK(art.trace.events[i - 1].tick < art.trace.events[i].tick);
}

TEST_CASE("crash at tick zero leaves the initial image") {
  SimConfig cfg = smallCfg(1);
  ScheduleConfig sched = seeded(3);
  sched.crashPolicy = CrashPolicy::AtTick;
  sched.crashTick = 0;
  Engine eng(cfg, sched);
  eng.addThread([](Engine& e, uint32_t t) { return storerBody(e, t, 0); });
  RandomOracle oracle(3, 0.1);
  eng.run(oracle);
  CHECK(eng.crashed());
  CHECK(eng.trace().crashed);
  PmImage fresh(eng.layout());
  CHECK(eng.pm() == fresh);
}

TEST_CASE("crash discards cache and controller state") {
  SimConfig cfg = smallCfg(2);
  ScheduleConfig sched = seeded(3);
  sched.crashPolicy = CrashPolicy::AtTick;
  sched.crashTick = 6;
  Engine eng(cfg, sched);
  for (int i = 0; i < 2; ++i)
    eng.addThread([](Engine& e, uint32_t t) { return storerBody(e, t, t * 2); });
  RandomOracle oracle(3, 0.0);
  eng.run(oracle);
  CHECK(eng.crashed());
  CHECK(eng.cache().size() == 0);
  CHECK(eng.controller().vdbDepth() == 0);
}

TEST_CASE("timestamps are unique across threads and ordered by trace position") {
  WorkloadSpec spec;
  spec.kind = WorkloadKind::CounterVector;
  spec.threads = 3;
  spec.txCount = 9;
  spec.writesPerTx = 2;
  spec.tableLines = 4;
  spec.seed = 11;
  RunArtifacts art;
  runWorkload(spec, seeded(11), Method::Wrap, nullptr, &art);
  std::vector<uint64_t> ts;
  for (const TxRecord& tx : art.trace.txs) {
    ts.push_back(tx.startTime.value);
    ts.push_back(tx.persistTime.value);
    CHECK(tx.startTime < tx.persistTime);
  }
  std::sort(ts.begin(), ts.end());
  CHECK(std::adjacent_find(ts.begin(), ts.end()) == ts.end());
}

TEST_CASE("json-lines export is one parseable object per event") {
  WorkloadSpec spec;
  spec.kind = WorkloadKind::CounterVector;
  spec.threads = 1;
  spec.txCount = 2;
  spec.writesPerTx = 1;
  spec.tableLines = 4;
  spec.seed = 1;
  RunArtifacts art;
  runWorkload(spec, seeded(1), Method::Wrap, nullptr, &art);
  std::ostringstream os;
  art.trace.exportJsonLines(os);
  std::istringstream is(os.str());
  std::string lineStr;
  size_t n = 0;
  while (std::getline(is, lineStr)) {
    auto j = nlohmann::json::parse(lineStr);
    CHECK(j.contains("tick"));
    CHECK(j.contains("kind"));
    ++n;
  }
  CHECK(n == art.trace.events.size());
}

TEST_CASE("crash image reconstruction is a function of events up to the tick") {
  WorkloadSpec spec;
  spec.kind = WorkloadKind::Hashtable;
  spec.threads = 2;
  spec.txCount = 6;
  spec.writesPerTx = 2;
  spec.tableLines = 8;
  spec.seed = 9;
  spec.randomValues = true;
  ScheduleConfig sched = seeded(9);
  sched.evictionRate = 0.3;
  RunArtifacts art;
  runWorkload(spec, sched, Method::Wrap, nullptr, &art);
  PmImage last(art.layout);
  uint64_t prev = 0;
  for (uint64_t tick : interestingCrashTicks(art.trace)) {
    PmImage img = injectCrash(art.layout, art.trace, tick);
    CHECK(tick >= prev);
    prev = tick;
    last = img;
  }
  CHECK(last.homeSnapshot() == art.finalHome);
}
