#include "wrapsim/htm.hpp"

#include <algorithm>
#include <set>

#include "wrapsim/engine.hpp"

namespace wrapsim {

void Htm::acquireLock(Engine& eng, uint32_t t) {
  if (lockHolder_) throw std::logic_error("fallback lock already held");
  lockHolder_ = t;
  // Non-speculative write to the lock word: every active section loses.
  conflictOnWrite(eng, t, false, kLockLine);
}

void Htm::releaseLock(uint32_t t) {
  if (lockHolder_ != t) throw std::logic_error("release by non-holder");
  lockHolder_.reset();
}

bool Htm::tryBegin(uint32_t t, WrapId owner, bool underLock) {
  if (sections_[t] && sections_[t]->active)
    throw SimError(Err::ProtocolViolation, "nested HTM section");
  if (!underLock && lockHolder_ && lockHolder_ != t) return false;
  sections_[t] = Section{};
  Section& s = *sections_[t];
  s.owner = owner;
  s.thread = t;
  s.active = true;
  s.usingLock = underLock;
  // Lock-covered stores are visible before the release that orders them;
  // reserve the commit slot now so eviction provenance stays attributable.
  if (underLock) s.reservedSeq = nextTxSeq_;
  s.readSet.insert(kLockLine);
  return true;
}

void Htm::rollback(Engine& eng, uint32_t t, HtmAbort::Reason why) {
  Section& s = *section(t);
  s.active = false;
  s.writeBuf.clear();
  s.writesOrdered.clear();
  s.readsObserved.clear();
  cache_.clearSpeculative(s.owner);
  ++abortCount_;
  eng.record(EventKind::HtmAbort, t, 0, static_cast<uint64_t>(why));
}

void Htm::abort(Engine& eng, uint32_t t, HtmAbort::Reason why) {
  Section* s = section(t);
  if (!s || !s->active) return;
  rollback(eng, t, why);
  eng.setAbortPending(t);  // victim unwinds at its next scheduling point
}

void Htm::abortSelf(Engine& eng, uint32_t t, HtmAbort::Reason why) {
  rollback(eng, t, why);
  throw HtmAbort{why};
}

void Htm::conflictOnWrite(Engine& eng, uint32_t t, bool requesterInSection, uint64_t line) {
  for (uint32_t u = 0; u < sections_.size(); ++u) {
    if (u == t) continue;
    Section* s = section(u);
    if (!s || !s->active || s->usingLock) continue;  // the lock holder never aborts
    if (s->readSet.count(line) == 0 && s->writeBuf.count(line) == 0) continue;
    if (requesterInSection && cfg_.policy == ConflictPolicy::HolderWins)
      abortSelf(eng, t, HtmAbort::Reason::Conflict);
    abort(eng, u, HtmAbort::Reason::Conflict);
  }
}

void Htm::conflictOnRead(Engine& eng, uint32_t t, bool requesterInSection, uint64_t line) {
  for (uint32_t u = 0; u < sections_.size(); ++u) {
    if (u == t) continue;
    Section* s = section(u);
    if (!s || !s->active || s->usingLock || s->writeBuf.count(line) == 0) continue;
    if (requesterInSection && cfg_.policy == ConflictPolicy::HolderWins)
      abortSelf(eng, t, HtmAbort::Reason::Conflict);
    abort(eng, u, HtmAbort::Reason::Conflict);
  }
}

void Htm::specStore(Engine& eng, uint32_t t, Address a, CacheLineValue v) {
  Section& s = *section(t);
  if (s.usingLock) {
    // Lock-covered sections run non-speculatively; isolation comes from the
    // lock, visibility is immediate.
    conflictOnWrite(eng, t, false, a.line);
    cache_.store(eng, a, v, s.reservedSeq);
    s.writesOrdered.push_back(LogEntry{a, v});
    return;
  }
  conflictOnWrite(eng, t, true, a.line);
  if (s.writeBuf.count(a.line) == 0 && s.writeBuf.size() >= eng.cfg().cacheCapacity)
    abortSelf(eng, t, HtmAbort::Reason::Capacity);
  s.writeBuf[a.line] = v;
  s.writesOrdered.push_back(LogEntry{a, v});
  cache_.markSpeculative(a, s.owner);
}

CacheLineValue Htm::specRead(Engine& eng, uint32_t t, Address a) {
  Section& s = *section(t);
  if (!s.usingLock) {
    auto it = s.writeBuf.find(a.line);
    if (it != s.writeBuf.end()) return it->second;  // read-your-own-write
  }
  conflictOnRead(eng, t, !s.usingLock, a.line);
  CacheLineValue v = cache_.read(eng, a);
  s.readSet.insert(a.line);
  s.readsObserved.push_back(LogEntry{a, v});
  return v;
}

void Htm::plainStore(Engine& eng, uint32_t t, Address a, CacheLineValue v, int32_t producerTx) {
  conflictOnWrite(eng, t, false, a.line);
  cache_.store(eng, a, v, producerTx);
}

CacheLineValue Htm::plainRead(Engine& eng, uint32_t t, Address a) {
  conflictOnRead(eng, t, false, a.line);
  return cache_.read(eng, a);
}

Htm::CommitInfo Htm::end(Engine& eng, uint32_t t) {
  Section* s = section(t);
  if (!s || !s->active) throw SimError(Err::ProtocolViolation, "XEnd outside a section");
  if (!s->usingLock && lockHolder_ && lockHolder_ != t)
    abortSelf(eng, t, HtmAbort::Reason::LockHeld);

  if (s->usingLock && s->reservedSeq != nextTxSeq_)
    throw std::logic_error("commit interleaved with a lock-covered section");
  CommitInfo info = bookkeepCommit(*s);

  if (!s->usingLock) {
    // All speculative stores become visible at this event, atomically.
    for (const auto& e : s->writesOrdered) cache_.store(eng, e.addr, e.value, info.txSeq);
    cache_.clearSpeculative(s->owner);
  }

  s->active = false;
  if (s->usingLock) releaseLock(t);
  eng.record(EventKind::HtmCommit, t, 0, static_cast<uint64_t>(info.txSeq));
  return info;
}

Htm::CommitInfo Htm::bookkeepCommit(Section& s) {
  CommitInfo info;
  info.txSeq = nextTxSeq_++;
  info.writesOrdered = s.writesOrdered;
  info.readsObserved = s.readsObserved;

  // Dependency edges are tracked over home lines only; log-range traffic is
  // per-thread plumbing and must not order unrelated transactions.
  auto isHome = [this](uint64_t line) { return line < homeLines_; };

  std::set<int32_t> prec;
  for (const auto& r : s.readsObserved) {
    if (!isHome(r.addr.line)) continue;
    auto it = lastWriter_.find(r.addr.line);
    if (it != lastWriter_.end()) prec.insert(it->second);
  }
  std::set<uint64_t> written;
  for (const auto& w : s.writesOrdered)
    if (isHome(w.addr.line)) written.insert(w.addr.line);
  for (uint64_t line : written) {
    auto it = lastWriter_.find(line);
    if (it != lastWriter_.end()) prec.insert(it->second);
    auto rs = readersSince_.find(line);
    if (rs != readersSince_.end())
      for (int32_t r : rs->second) prec.insert(r);
  }
  prec.erase(info.txSeq);
  info.directPrec.assign(prec.begin(), prec.end());

  for (uint64_t line : written) {
    lastWriter_[line] = info.txSeq;
    readersSince_[line].clear();
  }
  for (const auto& r : s.readsObserved)
    if (isHome(r.addr.line) && written.count(r.addr.line) == 0)
      readersSince_[r.addr.line].push_back(info.txSeq);
  return info;
}

void Htm::discardVolatile() {
  for (auto& s : sections_) s.reset();
  lockHolder_.reset();
}

}  // namespace wrapsim
