#include "wrapsim/engine.hpp"

#include <algorithm>
#include <stdexcept>

namespace wrapsim {

ActionChoice RandomOracle::choose(const ActionMenu& menu) {
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  bool evict = !menu.evictable.empty() &&
               (menu.runnable.empty() || coin(rng_) < evictionRate_);
  if (evict) {
    std::uniform_int_distribution<size_t> d(0, menu.evictable.size() - 1);
    return {ActionChoice::Kind::Evict, d(rng_)};
  }
  std::uniform_int_distribution<size_t> d(0, menu.runnable.size() - 1);
  return {ActionChoice::Kind::ThreadStep, d(rng_)};
}

Engine::Engine(const SimConfig& cfg, const ScheduleConfig& sched)
    : cfg_(cfg), sched_(sched), layout_(MemLayout::from(cfg)), pm_(layout_), rng_(sched.seed) {
  cfg_.validate();
  ctrl_ = std::make_unique<Controller>(pm_, cfg_.threads, cfg_.mutations, this);
  cache_ = std::make_unique<Cache>(cfg_.cacheCapacity, layout_, *ctrl_);
  htm_ = std::make_unique<Htm>(cfg_.threads, cfg_.htm, *cache_, layout_.homeLines);
  switch (sched_.crashPolicy) {
    case CrashPolicy::None:
      break;
    case CrashPolicy::AtTick:
      crashAt_ = sched_.crashTick;
      break;
    case CrashPolicy::Random: {
      uint64_t bound = sched_.crashTickBound ? sched_.crashTickBound : 4096;
      crashAt_ = std::uniform_int_distribution<uint64_t>(0, bound)(rng_);
      break;
    }
  }
}

void Engine::addThread(ThreadBody body) {
  if (started_) throw std::logic_error("addThread after start");
  bodies_.push_back(std::move(body));
}

void Engine::start() {
  if (started_) return;
  if (bodies_.size() > cfg_.threads)
    throw SimError(Err::ConfigError, "more thread bodies than configured threads");
  started_ = true;
  threads_.resize(bodies_.size());
  for (uint32_t t = 0; t < bodies_.size(); ++t) {
    threads_[t].task = bodies_[t](*this, t);
    threads_[t].leaf = threads_[t].task.handle();
    threads_[t].state = ThreadState::Ready;
  }
}

void Engine::refreshStates() {
  for (auto& th : threads_) {
    if (th.state == ThreadState::Blocked && th.blockPred && th.blockPred())
      th.state = ThreadState::Ready;
    // A woken thread whose predicate was invalidated before it ran goes back
    // to sleep; the predicate must hold at the moment it actually resumes.
    if (th.state == ThreadState::Ready && th.blockPred && !th.blockPred())
      th.state = ThreadState::Blocked;
    if (th.state == ThreadState::Sleeping && clock_ >= th.sleepUntil)
      th.state = ThreadState::Ready;
  }
}

ActionMenu Engine::menu() {
  if (!started_) start();
  refreshStates();
  ActionMenu m;
  if (crashed_) return m;
  for (uint32_t t = 0; t < threads_.size(); ++t)
    if (threads_[t].state == ThreadState::Ready) m.runnable.push_back(t);
  if (m.runnable.empty()) {
    // Nothing runnable: fast-forward past the earliest backoff sleep.
    uint64_t next = ~uint64_t{0};
    for (auto& th : threads_)
      if (th.state == ThreadState::Sleeping) next = std::min(next, th.sleepUntil);
    if (next != ~uint64_t{0}) {
      clock_ = std::max(clock_, next);
      refreshStates();
      for (uint32_t t = 0; t < threads_.size(); ++t)
        if (threads_[t].state == ThreadState::Ready) m.runnable.push_back(t);
    }
  }
  if (evictionsDone_ < maxEvictions_)
    m.evictable = cache_->dirtyEvictableLines(evictHomeOnly_);
  return m;
}

void Engine::stepAction(const ActionChoice& c) {
  if (crashed_) throw std::logic_error("step after crash");
  if (clock_ >= crashAt_) {
    crashNow();
    return;
  }
  ActionMenu m = menu();
  if (c.kind == ActionChoice::Kind::ThreadStep) {
    directThreadStep(m.runnable.at(c.index));
  } else {
    directEvict(m.evictable.at(c.index));
  }
}

void Engine::directThreadStep(uint32_t t) {
  auto& th = threads_.at(t);
  if (th.state != ThreadState::Ready || th.task.finished())
    throw std::logic_error("dispatch of a non-runnable thread");
  th.blockPred = nullptr;
  charge(1);
  record(EventKind::ThreadStep, t);
  auto h = th.leaf;
  th.leaf = {};
  h.resume();
  if (th.task.finished()) th.state = ThreadState::Done;
}

void Engine::directEvict(uint64_t line) {
  ++evictionsDone_;
  cache_->evict(*this, Address{line});
}

void Engine::crashNow() {
  crashed_ = true;
  charge(1);
  record(EventKind::Crash, Event::kNoThread);
  cache_->discardVolatile();
  ctrl_->discardVolatile();
  htm_->discardVolatile();
  trace_.crashed = true;
  trace_.finalTick = clock_;
}

bool Engine::finished() const {
  if (crashed_) return true;
  for (const auto& th : threads_)
    if (!th.task.finished()) return false;
  return true;
}

void Engine::run(ChoiceOracle& oracle) {
  start();
  for (;;) {
    if (clock_ >= crashAt_ && !crashed_) {
      crashNow();
      break;
    }
    ActionMenu m = menu();
    if (m.runnable.empty()) {
      bool allDone = true;
      for (auto& th : threads_)
        if (!th.task.finished()) allDone = false;
      if (allDone) break;
      if (m.evictable.empty())
        throw std::logic_error("scheduler stuck: blocked threads and nothing evictable");
    }
    ActionChoice c = oracle.choose(m);
    if (c.kind == ActionChoice::Kind::ThreadStep) {
      directThreadStep(m.runnable.at(c.index));
    } else {
      directEvict(m.evictable.at(c.index));
    }
  }
  trace_.finalTick = clock_;
}

CacheLineValue Engine::memRead(uint32_t t, Address a) {
  if (htm_->inSection(t)) return htm_->specRead(*this, t, a);
  return htm_->plainRead(*this, t, a);
}

void Engine::memStore(uint32_t t, Address a, CacheLineValue v, int32_t producerTx) {
  if (htm_->inSection(t)) {
    htm_->specStore(*this, t, a, v);
  } else {
    htm_->plainStore(*this, t, a, v, producerTx);
  }
}

void Engine::memClwb(uint32_t t, Address a) {
  if (htm_->inSection(t) && !htm_->section(t)->usingLock)
    throw SimError(Err::ProtocolViolation, "clwb inside an HTM section");
  cache_->clwb(a);
}

void Engine::memSfence(uint32_t t) {
  if (htm_->inSection(t) && !htm_->section(t)->usingLock)
    throw SimError(Err::ProtocolViolation, "sfence inside an HTM section");
  charge(cfg_.costs.fenceCost);
  cache_->sfence(*this);
}

void Engine::record(EventKind kind, uint32_t thread, uint64_t line, uint64_t value,
                    PmWriteSource src, int32_t producerTx) {
  if (cfg_.traceLevel == TraceLevel::MetricsOnly) return;
  // Zero-cost bookkeeping events still consume a tick: trace ticks are
  // strictly increasing by contract.
  if (!trace_.events.empty() && trace_.events.back().tick >= clock_)
    clock_ = trace_.events.back().tick + 1;
  Event e;
  e.tick = clock_;
  e.kind = kind;
  e.thread = thread;
  e.line = line;
  e.value = value;
  e.source = src;
  e.producerTx = producerTx;
  trace_.events.push_back(e);
}

int32_t Engine::appendTx(TxRecord rec) {
  if (rec.txSeq != static_cast<int32_t>(trace_.txs.size()))
    throw std::logic_error("transaction records must be appended in commit order");
  if (cfg_.traceLevel == TraceLevel::MetricsOnly) {
    rec.writeSet.clear();
    rec.reads.clear();
    rec.directPrec.clear();
  }
  trace_.txs.push_back(std::move(rec));
  return static_cast<int32_t>(trace_.txs.size()) - 1;
}

void Engine::onPmWrite(Address a, CacheLineValue v, PmWriteSource src, int32_t producerTx) {
  charge(cfg_.costs.pmWriteCost);
  record(EventKind::PmWrite, Event::kNoThread, a.line, v.word, src, producerTx);
}

void Engine::onVdbInsert(Address a, CacheLineValue v, int32_t producerTx) {
  charge(1);
  record(EventKind::VdbInsert, Event::kNoThread, a.line, v.word,
         PmWriteSource::DirectHome, producerTx);
}

void Engine::onStrictSignal(uint32_t token) {
  charge(1);
  record(EventKind::StrictSignal, token);
}

}  // namespace wrapsim
