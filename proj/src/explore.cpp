#include "wrapsim/explore.hpp"

#include <random>

#include "wrapsim/engine.hpp"
#include "wrapsim/recovery.hpp"
#include "wrapsim/wrap.hpp"

namespace wrapsim {

namespace {

struct MiniOp {
  enum class Kind { Write, Read, Rmw } kind;
  uint64_t line;
  uint64_t value;
};

struct MiniTx {
  std::vector<MiniOp> ops;
  Durability durability = Durability::Relaxed;
};

struct MiniWorkload {
  uint32_t threads = 2;
  std::vector<std::vector<MiniTx>> perThread;
  SimConfig cfg;
};

ThreadTask miniBody(Engine& eng, WrapLib& lib, const MiniWorkload& w, uint32_t t) {
  (void)eng;
  for (const MiniTx& tx : w.perThread[t]) {
    const MiniTx* txp = &tx;
    co_await lib.runTransaction(t, tx.durability, [txp](WrapLib::Ctx& c) -> Co<void> {
      for (const MiniOp& op : txp->ops) {
        switch (op.kind) {
          case MiniOp::Kind::Write:
            co_await c.store(op.line, op.value);
            break;
          case MiniOp::Kind::Read:
            co_await c.read(op.line);
            break;
          case MiniOp::Kind::Rmw: {
            CacheLineValue v = co_await c.read(op.line);
            co_await c.store(op.line, v.word + 1);
            break;
          }
        }
      }
    });
  }
}

MiniWorkload randomWorkload(uint64_t seed, const SuiteOptions& opt) {
  std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ull + 1);
  MiniWorkload w;
  w.threads = 1 + rng() % opt.maxThreads;
  uint32_t wraps = w.threads + rng() % (opt.maxWraps - w.threads + 1);
  w.perThread.resize(w.threads);

  w.cfg.threads = w.threads;
  w.cfg.homeLines = 48;
  w.cfg.writeSetCapacity = opt.maxWritesPerWrap + 2;
  w.cfg.logSlotsPerWrap = (rng() % 4 == 0) ? 1 : 4;  // slots=1 forces quiesce
  w.cfg.cacheCapacity = 512;
  w.cfg.htm.policy = (rng() & 1) ? ConflictPolicy::RequesterWins : ConflictPolicy::HolderWins;
  w.cfg.mutations = opt.mutations;

  for (uint32_t k = 0; k < wraps; ++k) {
    MiniTx tx;
    switch (rng() % 3) {
      case 0:
        tx.durability = Durability::Relaxed;
        break;
      case 1:
        tx.durability = Durability::StrictController;
        break;
      default:
        tx.durability = Durability::StrictSoftware;
        break;
    }
    uint32_t writes = 1 + rng() % opt.maxWritesPerWrap;
    uint32_t reads = rng() % 3;
    for (uint32_t i = 0; i < writes; ++i) {
      uint64_t line = rng() % w.cfg.homeLines;
      if (rng() % 4 == 0) {
        tx.ops.push_back({MiniOp::Kind::Rmw, line, 0});
      } else {
        tx.ops.push_back({MiniOp::Kind::Write, line, rng() | 1});
      }
    }
    for (uint32_t i = 0; i < reads; ++i)
      tx.ops.push_back({MiniOp::Kind::Read, rng() % w.cfg.homeLines, 0});
    w.perThread[k % w.threads].push_back(std::move(tx));
  }
  return w;
}

}  // namespace

SuiteResult runRandomSuite(const SuiteOptions& opt) {
  SuiteResult res;
  for (uint64_t run = 0; run < opt.maxRuns && res.samples < opt.targetSamples; ++run) {
    uint64_t seed = opt.seedBase + run;
    MiniWorkload w = randomWorkload(seed, opt);

    ScheduleConfig sched;
    sched.seed = seed;
    sched.evictionRate = 0.05 + 0.45 * double(seed % 7) / 7.0;

    Engine eng(w.cfg, sched);
    WrapLib lib(eng);
    for (uint32_t t = 0; t < w.threads; ++t)
      eng.addThread([&lib, &w](Engine& e, uint32_t tt) { return miniBody(e, lib, w, tt); });
    RandomOracle oracle(seed ^ 0xabcdef, sched.evictionRate);
    eng.run(oracle);

    res.runs += 1;
    res.aborts += eng.htm().abortCount();
    res.maxVdbDepthSeen = std::max(res.maxVdbDepthSeen, eng.controller().maxVdbDepth());

    // Analytic delay-buffer bound: every buffered entry consumes one
    // committed store, so depth never exceeds writes-bound x wraps opened.
    uint64_t wrapsOpened = 0;
    for (const Event& e : eng.trace().events)
      if (e.kind == EventKind::WrapOpen) ++wrapsOpened;
    uint64_t bound = uint64_t{w.cfg.writeSetCapacity} * wrapsOpened;
    if (eng.controller().maxVdbDepth() > bound) res.vdbBoundHeld = false;
    if (eng.controller().vdbDepth() != 0) {
      res.violations += 1;
      if (res.firstViolation.empty())
        res.firstViolation = "VDB not drained at quiescence, seed " + std::to_string(seed);
      continue;
    }

    Trace trace = eng.trace();
    trace.finalTick = eng.clock();
    for (const TxRecord& tx : trace.txs)
      if (tx.strictSignalTick != 0) res.strictSignals += 1;

    TraceChecker checker(eng.layout(), trace);
    Verdict lemmas = checker.checkLemmas();
    Verdict serial = checker.checkSerializability();
    if (!lemmas.ok || !serial.ok) {
      res.violations += 1;
      if (res.firstViolation.empty())
        res.firstViolation =
            "seed " + std::to_string(seed) + ": " + (lemmas.ok ? serial.detail : lemmas.detail);
    }
    for (uint64_t tick : interestingCrashTicks(trace)) {
      res.samples += 1;
      Verdict v = checker.checkCrashConsistency(tick);
      if (!v.ok) {
        res.violations += 1;
        if (res.firstViolation.empty())
          res.firstViolation = "seed " + std::to_string(seed) + ": " + v.detail;
        break;
      }
    }
  }
  return res;
}

namespace {

// Replays a recorded choice string, then takes the first untried branch.
class ReplayOracle : public ChoiceOracle {
 public:
  explicit ReplayOracle(const std::vector<size_t>& choices) : choices_(choices) {}

  ActionChoice choose(const ActionMenu& menu) override {
    size_t width = menu.runnable.size() + menu.evictable.size();
    widths_.push_back(width);
    size_t pick = pos_ < choices_.size() ? choices_[pos_] : 0;
    ++pos_;
    if (pick < menu.runnable.size()) return {ActionChoice::Kind::ThreadStep, pick};
    return {ActionChoice::Kind::Evict, pick - menu.runnable.size()};
  }

  const std::vector<size_t>& widths() const { return widths_; }

 private:
  std::vector<size_t> choices_;
  std::vector<size_t> widths_;
  size_t pos_ = 0;
};

}  // namespace

DfsResult runExhaustive(const DfsOptions& opt) {
  DfsResult res;
  std::vector<size_t> choices;

  for (;;) {
    SimConfig cfg;
    cfg.threads = 2;
    cfg.homeLines = 8;
    cfg.writeSetCapacity = 4;
    cfg.logSlotsPerWrap = 2;
    ScheduleConfig sched;
    sched.seed = 7;

    Engine eng(cfg, sched);
    eng.setFineGrained(false);
    eng.setEvictHomeOnly(true);
    eng.setMaxEvictions(opt.maxEvictions);
    WrapLib lib(eng);

    MiniWorkload w;
    w.threads = 2;
    w.perThread.resize(2);
    {
      MiniTx a, b;
      a.ops.push_back({MiniOp::Kind::Write, 0, 11});
      if (opt.writesPerWrap >= 2) a.ops.push_back({MiniOp::Kind::Write, 1, 12});
      b.ops.push_back({MiniOp::Kind::Rmw, opt.sharedLine ? uint64_t{1} : uint64_t{2}, 0});
      if (opt.writesPerWrap >= 2) b.ops.push_back({MiniOp::Kind::Write, 3, 22});
      a.durability = Durability::Relaxed;
      b.durability = Durability::StrictController;
      w.perThread[0].push_back(std::move(a));
      w.perThread[1].push_back(std::move(b));
    }
    for (uint32_t t = 0; t < 2; ++t)
      eng.addThread([&lib, &w](Engine& e, uint32_t tt) { return miniBody(e, lib, w, tt); });

    ReplayOracle oracle(choices);
    eng.run(oracle);

    res.leaves += 1;
    Trace trace = eng.trace();
    trace.finalTick = eng.clock();
    TraceChecker checker(eng.layout(), trace);
    Verdict lem = checker.checkLemmas();
    if (!lem.ok) {
      res.violations += 1;
      if (res.firstViolation.empty()) res.firstViolation = lem.detail;
    }
    for (uint64_t tick : interestingCrashTicks(trace)) {
      res.samples += 1;
      Verdict v = checker.checkCrashConsistency(tick);
      if (!v.ok) {
        res.violations += 1;
        if (res.firstViolation.empty()) res.firstViolation = v.detail;
        break;
      }
    }

    if (res.leaves >= opt.maxLeaves) break;

    // Odometer step over the recorded branch widths.
    const std::vector<size_t>& widths = oracle.widths();
    choices.resize(widths.size(), 0);
    size_t i = widths.size();
    for (;;) {
      if (i == 0) return res;  // exhausted
      --i;
      size_t cur = i < choices.size() ? choices[i] : 0;
      if (cur + 1 < widths[i]) {
        choices[i] = cur + 1;
        choices.resize(i + 1);
        break;
      }
    }
  }
  return res;
}

}  // namespace wrapsim
