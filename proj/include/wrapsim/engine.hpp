#pragma once

#include <coroutine>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <vector>

#include "wrapsim/cache.hpp"
#include "wrapsim/config.hpp"
#include "wrapsim/controller.hpp"
#include "wrapsim/htm.hpp"
#include "wrapsim/pm_image.hpp"
#include "wrapsim/task.hpp"
#include "wrapsim/trace.hpp"

namespace wrapsim {

enum class TickKind : uint8_t {
  Local,       // thread-local bookkeeping
  Access,      // shared memory access
  Notify,      // controller notification
  Commit,      // persist-timestamp capture + XEnd
  FlushBatch,  // head of a clwb/sfence sequence
  FlushLine,   // individual flush micro-step; fused in coarse mode
};

// Which thread runs next, or which dirty line the cache gives up. The menu
// is deterministic; oracles only pick indices into it.
struct ActionMenu {
  std::vector<uint32_t> runnable;
  std::vector<uint64_t> evictable;
  bool empty() const { return runnable.empty() && evictable.empty(); }
};

struct ActionChoice {
  enum class Kind : uint8_t { ThreadStep, Evict } kind = Kind::ThreadStep;
  size_t index = 0;
};

class ChoiceOracle {
 public:
  virtual ~ChoiceOracle() = default;
  virtual ActionChoice choose(const ActionMenu& menu) = 0;
};

class RandomOracle : public ChoiceOracle {
 public:
  RandomOracle(uint64_t seed, double evictionRate)
      : rng_(seed ^ 0x9e3779b97f4a7c15ull), evictionRate_(evictionRate) {}
  ActionChoice choose(const ActionMenu& menu) override;

 private:
  std::mt19937_64 rng_;
  double evictionRate_;
};

class Engine : public ControllerHooks {
 public:
  using ThreadBody = std::function<ThreadTask(Engine&, uint32_t)>;

  Engine(const SimConfig& cfg, const ScheduleConfig& sched);

  void addThread(ThreadBody body);  // before start()
  void start();

  // One scheduling step. Thread dispatch resumes the chosen thread through
  // one yield point; evictions deliver one dirty line to the controller.
  ActionMenu menu();
  void stepAction(const ActionChoice& c);
  void directThreadStep(uint32_t thread);  // scripted runs
  void directEvict(uint64_t line);

  // Runs to completion (all threads done) or to the crash point.
  void run(ChoiceOracle& oracle);
  bool finished() const;
  bool crashed() const { return crashed_; }
  void crashNow();

  // --- facilities used by simulated-thread code ---

  struct TickAwaiter {
    Engine& eng;
    uint32_t thread;
    TickKind kind;
    bool await_ready() const noexcept { return !eng.yields(kind); }
    void await_suspend(std::coroutine_handle<> h) noexcept {
      eng.threads_[thread].leaf = h;
      eng.threads_[thread].state = ThreadState::Ready;
    }
    void await_resume() const {
      eng.checkAbort(thread);
      eng.charge(eng.cfg_.costs.stepCost);
    }
  };

  struct WaitAwaiter {
    Engine& eng;
    uint32_t thread;
    std::function<bool()> pred;
    bool await_ready() const { return pred(); }
    void await_suspend(std::coroutine_handle<> h) {
      eng.threads_[thread].leaf = h;
      eng.threads_[thread].state = ThreadState::Blocked;
      eng.threads_[thread].blockPred = pred;
    }
    void await_resume() const { eng.checkAbort(thread); }
  };

  struct SleepAwaiter {
    Engine& eng;
    uint32_t thread;
    uint64_t until;
    bool await_ready() const noexcept { return eng.clock_ >= until; }
    void await_suspend(std::coroutine_handle<> h) noexcept {
      eng.threads_[thread].leaf = h;
      eng.threads_[thread].state = ThreadState::Sleeping;
      eng.threads_[thread].sleepUntil = until;
    }
    void await_resume() const { eng.checkAbort(thread); }
  };

  TickAwaiter tick(uint32_t t, TickKind k) { return TickAwaiter{*this, t, k}; }
  WaitAwaiter waitUntil(uint32_t t, std::function<bool()> pred) {
    return WaitAwaiter{*this, t, std::move(pred)};
  }
  SleepAwaiter sleepFor(uint32_t t, uint64_t ticks) {
    return SleepAwaiter{*this, t, clock_ + ticks};
  }

  Timestamp now() { return Timestamp{++clock_}; }
  uint64_t clock() const { return clock_; }
  void charge(uint64_t cost) { clock_ += cost; }

  // Memory operations with HTM interception. Effects run synchronously
  // within the current dispatch; callers sequence them behind tick awaits.
  CacheLineValue memRead(uint32_t t, Address a);
  void memStore(uint32_t t, Address a, CacheLineValue v, int32_t producerTx = -1);
  void memClwb(uint32_t t, Address a);
  void memSfence(uint32_t t);

  SimConfig& cfg() { return cfg_; }
  const MemLayout& layout() const { return layout_; }
  PmImage& pm() { return pm_; }
  Controller& controller() { return *ctrl_; }
  Cache& cache() { return *cache_; }
  Htm& htm() { return *htm_; }
  Trace& trace() { return trace_; }
  std::mt19937_64& rng() { return rng_; }

  void setFineGrained(bool f) { fineGrained_ = f; }
  void setEvictHomeOnly(bool h) { evictHomeOnly_ = h; }
  void setMaxEvictions(uint64_t m) { maxEvictions_ = m; }

  void record(EventKind kind, uint32_t thread, uint64_t line = 0, uint64_t value = 0,
              PmWriteSource src = PmWriteSource::PassThrough, int32_t producerTx = -1);
  int32_t appendTx(TxRecord rec);
  TxRecord& tx(int32_t seq) { return trace_.txs.at(static_cast<size_t>(seq)); }

  // ControllerHooks
  void onPmWrite(Address a, CacheLineValue v, PmWriteSource src, int32_t producerTx) override;
  void onVdbInsert(Address a, CacheLineValue v, int32_t producerTx) override;
  void onStrictSignal(uint32_t token) override;

  void setAbortPending(uint32_t t) { threads_[t].abortPending = true; }
  bool inHtm(uint32_t t) const { return htm_->inSection(t); }

 private:
  enum class ThreadState : uint8_t { Ready, Blocked, Sleeping, Done };

  struct SimThread {
    ThreadTask task;
    std::coroutine_handle<> leaf;
    ThreadState state = ThreadState::Ready;
    std::function<bool()> blockPred;
    uint64_t sleepUntil = 0;
    bool abortPending = false;
  };

  bool yields(TickKind k) const {
    return fineGrained_ || k != TickKind::FlushLine;
  }
  void checkAbort(uint32_t t) {
    if (threads_[t].abortPending) {
      threads_[t].abortPending = false;
      throw HtmAbort{HtmAbort::Reason::Conflict};
    }
  }
  void refreshStates();

  SimConfig cfg_;
  ScheduleConfig sched_;
  MemLayout layout_;
  PmImage pm_;
  std::unique_ptr<Controller> ctrl_;
  std::unique_ptr<Cache> cache_;
  std::unique_ptr<Htm> htm_;
  std::vector<ThreadBody> bodies_;
  std::vector<SimThread> threads_;
  Trace trace_;
  std::mt19937_64 rng_;

  uint64_t clock_ = 0;
  bool started_ = false;
  bool crashed_ = false;
  bool fineGrained_ = true;
  bool evictHomeOnly_ = false;
  uint64_t maxEvictions_ = ~uint64_t{0};
  uint64_t evictionsDone_ = 0;
  uint64_t crashAt_ = ~uint64_t{0};
};

}  // namespace wrapsim
