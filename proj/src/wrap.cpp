#include "wrapsim/wrap.hpp"

#include <algorithm>

namespace wrapsim {

WrapLib::WrapLib(Engine& eng)
    : eng_(eng),
      status_(eng.cfg().threads),
      nextSlot_(eng.cfg().threads, 0),
      active_(eng.cfg().threads, false) {}

uint64_t WrapLib::backoffDelay(uint32_t retryCount) {
  uint32_t shift = std::min(retryCount, eng_.cfg().htm.maxBackoffShift);
  uint64_t window = uint64_t{1} << shift;
  return (eng_.rng()() % window) + 1;
}

Co<WrapTx> WrapLib::open(uint32_t thread) {
  if (active_[thread])
    throw SimError(Err::DuplicateOpen, "thread already has an active wrap");
  // Cleanup gate: new transactions are delayed while a quiesce is running.
  co_await eng_.waitUntil(thread, [this] { return !cleanupActive_; });
  if (nextSlot_[thread] >= eng_.cfg().logSlotsPerWrap) co_await logCleanup(thread);

  WrapTx tx;
  tx.wrapId = WrapId{thread};
  tx.thread = thread;
  tx.slot = nextSlot_[thread]++;
  tx.beginTick = eng_.clock();
  active_[thread] = true;

  co_await eng_.tick(thread, TickKind::Notify);
  eng_.controller().openWrap(tx.wrapId);

  co_await eng_.tick(thread, TickKind::Local);
  tx.startTime = eng_.now();
  eng_.record(EventKind::WrapOpen, thread, tx.wrapId.id, tx.startTime.value);
  const MemLayout& L = eng_.layout();
  if (eng_.pm().read(L.slotLine(tx.wrapId, tx.slot, 0)).word != 0)
    throw std::logic_error("log slot not clean at allocation");
  eng_.memStore(thread, L.slotLine(tx.wrapId, tx.slot, 0), CacheLineValue{tx.startTime.value});
  status_[thread] = Status{tx.startTime.value, 0, true};

  co_await eng_.tick(thread, TickKind::FlushBatch);
  eng_.memClwb(thread, L.slotLine(tx.wrapId, tx.slot, 0));
  co_await eng_.tick(thread, TickKind::FlushLine);
  eng_.memSfence(thread);

  tx.state = WrapState::Compute;
  co_return tx;
}

Co<void> WrapLib::htmBegin(uint32_t thread, WrapTx& tx) {
  if (tx.state != WrapState::Compute)
    throw SimError(Err::ProtocolViolation, "htmBegin outside COMPUTE");
  Htm& htm = eng_.htm();
  for (;;) {
    if (tx.retryCount > eng_.cfg().htm.retryThreshold) {
      // Backed off enough: take the software lock non-speculatively.
      co_await eng_.waitUntil(thread, [&htm] { return htm.lockFree(); });
      if (!htm.lockFree()) continue;  // lost the wakeup race
      htm.acquireLock(eng_, thread);
      co_await eng_.tick(thread, TickKind::Access);
      htm.tryBegin(thread, tx.wrapId, true);
      tx.usingLock = true;
      co_return;
    }
    co_await eng_.tick(thread, TickKind::Local);
    if (htm.tryBegin(thread, tx.wrapId, false)) co_return;
    // Lock observed held at XBegin: immediate abort path with backoff.
    ++tx.retryCount;
    co_await eng_.sleepFor(thread, backoffDelay(tx.retryCount));
  }
}

Co<void> WrapLib::wrapStore(uint32_t thread, WrapTx& tx, Address a, CacheLineValue v) {
  if (tx.state != WrapState::Compute)
    throw SimError(Err::ProtocolViolation, "wrapStore outside COMPUTE");
  if (eng_.layout().region(a) != Region::Home)
    throw SimError(Err::ProtocolViolation, "wrapStore target must be a home line");
  if (tx.writeSet.size() >= eng_.cfg().writeSetCapacity) {
    if (tx.usingLock)
      throw SimError(Err::ConfigError, "write set exceeds log slot capacity");
    eng_.htm().abortSelf(eng_, thread, HtmAbort::Reason::LogOverflow);
  }
  const MemLayout& L = eng_.layout();
  uint32_t k = static_cast<uint32_t>(tx.writeSet.size());
  // Speculative log append, then the normal speculative store.
  co_await eng_.tick(thread, TickKind::Local);
  eng_.memStore(thread, L.slotLine(tx.wrapId, tx.slot, 2 + 2ull * k), CacheLineValue{a.line});
  co_await eng_.tick(thread, TickKind::Local);
  eng_.memStore(thread, L.slotLine(tx.wrapId, tx.slot, 3 + 2ull * k), v);
  tx.writeSet.push_back(LogEntry{a, v});
  co_await eng_.tick(thread, TickKind::Access);
  eng_.memStore(thread, a, v);
}

Co<CacheLineValue> WrapLib::wrapRead(uint32_t thread, WrapTx& tx, Address a) {
  if (tx.state != WrapState::Compute)
    throw SimError(Err::ProtocolViolation, "wrapRead outside COMPUTE");
  co_await eng_.tick(thread, TickKind::Access);
  co_return eng_.memRead(thread, a);
}

Co<void> WrapLib::computeEnd(uint32_t thread, WrapTx& tx) {
  if (tx.state != WrapState::Compute)
    throw SimError(Err::ProtocolViolation, "computeEnd outside COMPUTE");
  co_await eng_.tick(thread, TickKind::Commit);
  // The persist timestamp is the last store before XEnd; it becomes visible
  // exactly at commit, together with the speculative log records.
  tx.persistTime = eng_.now();
  const MemLayout& L = eng_.layout();
  eng_.memStore(thread, L.slotLine(tx.wrapId, tx.slot, 1), CacheLineValue{tx.persistTime.value});
  Htm::CommitInfo info = eng_.htm().end(eng_, thread);

  TxRecord rec;
  rec.txSeq = info.txSeq;
  rec.wrap = tx.wrapId;
  rec.slot = tx.slot;
  rec.startTime = tx.startTime;
  rec.persistTime = tx.persistTime;
  rec.commitTick = eng_.clock();
  rec.writeSet = tx.writeSet;
  for (const auto& r : info.readsObserved)
    if (eng_.layout().region(r.addr) == Region::Home) rec.reads.push_back(r);
  rec.directPrec = info.directPrec;
  tx.txSeq = eng_.appendTx(std::move(rec));
  tx.state = WrapState::Log;
  ++committed_;
}

Co<void> WrapLib::flushPersistRecord(uint32_t thread, WrapTx& tx) {
  if (tx.state != WrapState::Log)
    throw SimError(Err::ProtocolViolation, "flush outside LOG");
  const MemLayout& L = eng_.layout();
  co_await eng_.tick(thread, TickKind::FlushBatch);
  eng_.memClwb(thread, L.slotLine(tx.wrapId, tx.slot, 1));
  co_await eng_.tick(thread, TickKind::FlushLine);
  eng_.memSfence(thread);
}

Co<void> WrapLib::flushWriteSetAndMarker(uint32_t thread, WrapTx& tx) {
  if (tx.state != WrapState::Log)
    throw SimError(Err::ProtocolViolation, "flush outside LOG");
  const MemLayout& L = eng_.layout();
  co_await eng_.tick(thread, TickKind::FlushBatch);
  for (uint32_t k = 0; k < tx.writeSet.size(); ++k) {
    eng_.memClwb(thread, L.slotLine(tx.wrapId, tx.slot, 2 + 2ull * k));
    co_await eng_.tick(thread, TickKind::FlushLine);
    eng_.memClwb(thread, L.slotLine(tx.wrapId, tx.slot, 3 + 2ull * k));
    co_await eng_.tick(thread, TickKind::FlushLine);
  }
  eng_.memSfence(thread);
  // The end marker is stored only after the record body is durable, so no
  // schedule (including an eviction of the marker line) can make a marker
  // visible ahead of the entries it seals.
  co_await eng_.tick(thread, TickKind::FlushLine);
  uint32_t count = static_cast<uint32_t>(tx.writeSet.size());
  uint32_t sum = logChecksum(tx.startTime, tx.persistTime, tx.writeSet);
  eng_.memStore(thread, L.markerLine(tx.wrapId, tx.slot), CacheLineValue{packMarker(count, sum)});
  eng_.memClwb(thread, L.markerLine(tx.wrapId, tx.slot));
  co_await eng_.tick(thread, TickKind::FlushLine);
  eng_.memSfence(thread);
  tx.state = WrapState::Close;
}

Co<void> WrapLib::closeLog(uint32_t thread, WrapTx& tx) {
  if (eng_.cfg().mutations.skipLogFence) {
    // Mutation knob: close without making the log durable.
    co_await eng_.tick(thread, TickKind::Local);
    const MemLayout& L = eng_.layout();
    uint32_t count = static_cast<uint32_t>(tx.writeSet.size());
    uint32_t sum = logChecksum(tx.startTime, tx.persistTime, tx.writeSet);
    eng_.memStore(thread, L.markerLine(tx.wrapId, tx.slot), CacheLineValue{packMarker(count, sum)});
    tx.state = WrapState::Close;
    co_return;
  }
  co_await flushPersistRecord(thread, tx);
  co_await flushWriteSetAndMarker(thread, tx);
}

Co<void> WrapLib::closeNotify(uint32_t thread, WrapTx& tx) {
  if (tx.state != WrapState::Close)
    throw SimError(Err::ProtocolViolation, "closeNotify before the log flush");
  // Status line: persist time recorded, open flag cleared.
  status_[thread].persist = tx.persistTime.value;
  status_[thread].open = false;
  writtenRecords_.push_back(RecordRef{thread, tx.slot, tx.persistTime.value});

  co_await eng_.tick(thread, TickKind::Notify);
  bool strictCtrl = tx.durability == Durability::StrictController;
  if (strictCtrl) eng_.controller().resetMailbox(thread);
  eng_.controller().closeWrap(tx.wrapId, strictCtrl ? std::optional<uint32_t>(thread)
                                                    : std::nullopt);
  eng_.record(EventKind::WrapClose, thread, tx.wrapId.id, strictCtrl ? 1 : 0);
  eng_.tx(tx.txSeq).closeTick = eng_.clock();
  active_[thread] = false;
  tx.state = WrapState::Commit;

  if (strictCtrl) {
    co_await eng_.waitUntil(thread, [this, thread] {
      return eng_.controller().mailbox(thread) == 1;
    });
    // Resolve the signal tick from the trace for the checker.
    if (eng_.cfg().traceLevel == TraceLevel::Full) {
      for (auto it = eng_.trace().events.rbegin(); it != eng_.trace().events.rend(); ++it) {
        if (it->kind == EventKind::StrictSignal && it->thread == thread) {
          eng_.tx(tx.txSeq).strictSignalTick = it->tick;
          break;
        }
      }
    }
  } else if (tx.durability == Durability::StrictSoftware) {
    co_await softwareStrictWait(thread, tx);
  }
  tx.state = WrapState::Done;
  tx.endTick = eng_.clock();
}

Co<void> WrapLib::softwareStrictWait(uint32_t thread, WrapTx& tx) {
  // Scan the per-thread status lines: proceed once every other thread is
  // either not in an open transaction or started/persisted after us.
  uint64_t mine = tx.persistTime.value;
  co_await eng_.waitUntil(thread, [this, thread, mine] {
    for (uint32_t u = 0; u < status_.size(); ++u) {
      if (u == thread) continue;
      const Status& s = status_[u];
      if (s.open && s.start <= mine && (s.persist == 0 || s.persist <= mine)) return false;
    }
    return true;
  });
  co_await eng_.tick(thread, TickKind::Local);
  eng_.record(EventKind::SoftWaitDone, thread);
  if (tx.txSeq >= 0) eng_.tx(tx.txSeq).strictSignalTick = eng_.clock();
}

Co<void> WrapLib::logCleanup(uint32_t thread) {
  if (cleanupActive_) {
    co_await eng_.waitUntil(thread, [this] { return !cleanupActive_; });
    co_return;  // a concurrent cleanup reset the rings
  }
  cleanupActive_ = true;
  co_await eng_.waitUntil(thread, [this] { return eng_.controller().cotEmpty(); });
  if (eng_.controller().vdbDepth() != 0)
    throw std::logic_error("VDB not drained at quiesce");

  // Flush all dirty home lines so PM holds every committed update.
  std::vector<uint64_t> dirty = eng_.cache().dirtyHomeLines();
  co_await eng_.tick(thread, TickKind::FlushBatch);
  for (uint64_t line : dirty) {
    eng_.memClwb(thread, Address{line});
    co_await eng_.tick(thread, TickKind::FlushLine);
  }
  eng_.memSfence(thread);

  // Clear consumed records in ascending persistTime and fence once: a torn
  // cleanup leaves a persist-order prefix erased, which recovery tolerates.
  std::sort(writtenRecords_.begin(), writtenRecords_.end(),
            [](const RecordRef& a, const RecordRef& b) { return a.persistTime < b.persistTime; });
  const MemLayout& L = eng_.layout();
  co_await eng_.tick(thread, TickKind::FlushBatch);
  for (const RecordRef& r : writtenRecords_) {
    eng_.memStore(thread, L.slotLine(WrapId{r.thread}, r.slot, 0), CacheLineValue{0});
    eng_.memClwb(thread, L.slotLine(WrapId{r.thread}, r.slot, 0));
    eng_.memStore(thread, L.markerLine(WrapId{r.thread}, r.slot), CacheLineValue{0});
    eng_.memClwb(thread, L.markerLine(WrapId{r.thread}, r.slot));
    co_await eng_.tick(thread, TickKind::FlushLine);
  }
  eng_.memSfence(thread);
  writtenRecords_.clear();
  std::fill(nextSlot_.begin(), nextSlot_.end(), 0);

  co_await eng_.tick(thread, TickKind::Local);
  eng_.record(EventKind::CleanupDone, thread);
  ++cleanupCount_;
  cleanupActive_ = false;
}

Co<void> WrapLib::runTransaction(uint32_t thread, Durability d, Body body) {
  WrapTx tx = co_await open(thread);
  tx.durability = d;
  Ctx ctx{*this, thread, tx};
  for (;;) {
    co_await htmBegin(thread, tx);
    bool aborted = false;
    HtmAbort::Reason why{};
    try {
      co_await body(ctx);
      co_await computeEnd(thread, tx);
    } catch (const HtmAbort& a) {
      aborted = true;
      why = a.reason;
    }
    if (!aborted) break;
    tx.writeSet.clear();  // speculative log vanished with the section
    tx.usingLock = false;
    if (why == HtmAbort::Reason::LogOverflow) {
      tx.retryCount = eng_.cfg().htm.retryThreshold + 1;  // escalate to the lock
    } else {
      ++tx.retryCount;
      co_await eng_.sleepFor(thread, backoffDelay(tx.retryCount));
    }
  }
  co_await closeLog(thread, tx);
  co_await closeNotify(thread, tx);
}

}  // namespace wrapsim
