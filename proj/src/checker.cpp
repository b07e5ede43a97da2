#include "wrapsim/checker.hpp"

#include <algorithm>
#include <functional>
#include <sstream>

namespace wrapsim {

namespace {

std::vector<uint32_t> directPrecMasks(const std::vector<TxRecord>& txs) {
  std::vector<uint32_t> masks(txs.size(), 0);
  for (size_t i = 0; i < txs.size(); ++i)
    for (int32_t p : txs[i].directPrec) masks[i] |= uint32_t{1} << p;
  return masks;
}

void enumerateClosed(const MemLayout& layout, const std::vector<TxRecord>& txs,
                     uint32_t bound, const HomeImage* initial,
                     const std::function<void(uint32_t, const HomeImage&)>& emit) {
  if (txs.size() > bound || txs.size() > 31)
    throw SimError(Err::ScaleLimit, "committed-wrap count exceeds the oracle bound");
  std::vector<uint32_t> prec = directPrecMasks(txs);
  uint32_t n = static_cast<uint32_t>(txs.size());
  HomeImage base = initial ? *initial : HomeImage(layout.homeLines, 0);
  for (uint32_t mask = 0; mask < (uint32_t{1} << n); ++mask) {
    bool closed = true;
    for (uint32_t i = 0; i < n && closed; ++i)
      if ((mask >> i) & 1) closed = (prec[i] & ~mask) == 0;
    if (!closed) continue;
    HomeImage img = base;
    for (uint32_t i = 0; i < n; ++i)
      if ((mask >> i) & 1)
        for (const auto& e : txs[i].writeSet) img.at(e.addr.line) = e.value.word;
    emit(mask, img);
  }
}

}  // namespace

std::set<HomeImage> consistentStates(const MemLayout& layout,
                                     const std::vector<TxRecord>& committed,
                                     uint32_t bound) {
  std::set<HomeImage> out;
  enumerateClosed(layout, committed, bound, nullptr,
                  [&out](uint32_t, const HomeImage& img) { out.insert(img); });
  return out;
}

TraceChecker::TraceChecker(const MemLayout& layout, const Trace& trace, uint32_t oracleBound)
    : layout_(layout), trace_(trace), oracleBound_(oracleBound) {
  n_ = static_cast<uint32_t>(trace.txs.size());
  precMask_ = directPrecMasks(trace.txs);

  precClosure_ = precMask_;
  for (uint32_t i = 0; i < n_; ++i)
    for (uint32_t j = 0; j < i; ++j)
      if ((precClosure_[i] >> j) & 1) precClosure_[i] |= precClosure_[j];

  facts_.resize(n_);
  for (const Event& e : trace.events) {
    if (e.kind != EventKind::PmWrite) continue;
    if (e.producerTx >= 0 && layout.region(Address{e.line}) == Region::Home) {
      auto& f = facts_[static_cast<size_t>(e.producerTx)];
      if (f.firstHomePmWrite == 0) f.firstHomePmWrite = e.tick;
    }
  }
  for (uint32_t i = 0; i < n_; ++i) {
    const TxRecord& tx = trace.txs[i];
    if (!tx.startTime.valid()) continue;  // no log discipline (HTM_ONLY)
    uint64_t markerLine = layout.markerLine(tx.wrap, tx.slot).line;
    uint64_t expect = packMarker(static_cast<uint32_t>(tx.writeSet.size()),
                                 logChecksum(tx.startTime, tx.persistTime, tx.writeSet));
    for (const Event& e : trace.events) {
      if (e.kind == EventKind::PmWrite && e.line == markerLine && e.value == expect) {
        facts_[i].logDurableTick = e.tick;
        break;
      }
    }
  }

}

void TraceChecker::ensureOracle() const {
  if (oracleBuilt_) return;
  enumerateClosed(layout_, trace_.txs, oracleBound_, nullptr,
                  [this](uint32_t mask, const HomeImage& img) {
                    states_.insert(img);
                    imageMasks_[img].push_back(mask);
                  });
  oracleBuilt_ = true;
}

const std::set<HomeImage>& TraceChecker::states() const {
  ensureOracle();
  return states_;
}

std::vector<uint32_t> TraceChecker::masksMatching(const HomeImage& img,
                                                  uint32_t prefixMask) const {
  std::vector<uint32_t> out;
  auto it = imageMasks_.find(img);
  if (it == imageMasks_.end()) return out;
  for (uint32_t m : it->second)
    if ((m & ~prefixMask) == 0) out.push_back(m);
  return out;
}

Verdict TraceChecker::checkOneCrash(uint64_t tick, const RecoveryReport& rep) const {
  ensureOracle();
  // Committed prefix at the crash point (txSeq is commit order).
  uint32_t m = 0;
  while (m < n_ && trace_.txs[m].commitTick <= tick) ++m;
  uint32_t prefixMask = (m >= 31) ? ~uint32_t{0} : (uint32_t{1} << m) - 1;

  HomeImage final = rep.finalImage.homeSnapshot();
  std::vector<uint32_t> matches = masksMatching(final, prefixMask);
  if (matches.empty()) {
    std::ostringstream os;
    os << "crash@" << tick << ": recovered image is not a consistent state of the "
       << m << " committed wraps";
    return Verdict::fail(os.str());
  }

  // Per-wrap atomicity, directly: on the lines a wrap last wrote (within the
  // prefix), the recovered image holds either all of its values or none.
  std::map<uint64_t, uint32_t> lastWriter;
  std::map<uint64_t, uint64_t> lastValue;
  for (uint32_t i = 0; i < m; ++i)
    for (const auto& e : trace_.txs[i].writeSet) {
      lastWriter[e.addr.line] = i;
      lastValue[e.addr.line] = e.value.word;
    }
  for (uint32_t i = 0; i < m; ++i) {
    bool any = false, all = true, have = false;
    for (const auto& [line, w] : lastWriter) {
      if (w != i) continue;
      have = true;
      bool present = final.at(line) == lastValue[line];
      any = any || present;
      all = all && present;
    }
    if (have && any != all) {
      std::ostringstream os;
      os << "crash@" << tick << ": wrap tx#" << i << " partially present after recovery";
      return Verdict::fail(os.str());
    }
  }

  // Strict durability (Lemma C3 shape): a wrap signaled durable before the
  // crash, or one that both closed and reached PM, must be in the recovered
  // prefix.
  for (uint32_t i = 0; i < m; ++i) {
    const TxRecord& tx = trace_.txs[i];
    bool signaled = tx.strictSignalTick != 0 && tx.strictSignalTick <= tick;
    bool drainedAndClosed = tx.closeTick != 0 && tx.closeTick <= tick &&
                            facts_[i].firstHomePmWrite != 0 &&
                            facts_[i].firstHomePmWrite <= tick;
    if (!signaled && !drainedAndClosed) continue;
    bool contained = false;
    for (uint32_t mask : matches)
      if ((mask >> i) & 1) contained = true;
    if (!contained) {
      std::ostringstream os;
      os << "crash@" << tick << ": tx#" << i
         << (signaled ? " signaled strict-durable" : " drained to PM")
         << " but absent from every matching recovered state";
      return Verdict::fail(os.str());
    }
  }
  return Verdict::pass();
}

Verdict TraceChecker::checkCrashConsistency(uint64_t crashTick) const {
  PmImage img = injectCrash(layout_, trace_, crashTick);
  return checkOneCrash(crashTick, recover(img));
}

Verdict TraceChecker::checkAllCrashPoints() const {
  for (uint64_t tick : interestingCrashTicks(trace_)) {
    Verdict v = checkCrashConsistency(tick);
    if (!v.ok) return v;
  }
  return Verdict::pass();
}

Verdict TraceChecker::checkLemmas() const {
  // C1: precedence implies startTime(Y) < persistTime(X).
  for (uint32_t x = 0; x < n_; ++x) {
    const TxRecord& X = trace_.txs[x];
    if (!X.persistTime.valid()) continue;
    for (uint32_t y = 0; y < n_; ++y) {
      if (!((precClosure_[x] >> y) & 1)) continue;
      const TxRecord& Y = trace_.txs[y];
      if (Y.startTime.valid() && !(Y.startTime < X.persistTime)) {
        std::ostringstream os;
        os << "C1: tx#" << y << " precedes tx#" << x << " but started at "
           << Y.startTime.value << " >= persist " << X.persistTime.value;
        return Verdict::fail(os.str());
      }
    }
  }

  // C2: when a wrap's update is written to PM, every wrap that started
  // before its persist timestamp has already closed.
  struct OpenInterval {
    uint64_t start;
    bool closed;
    uint64_t closeTick;
  };
  std::vector<OpenInterval> intervals;
  for (uint32_t i = 0; i < n_; ++i)
    if (trace_.txs[i].startTime.valid())
      intervals.push_back({trace_.txs[i].startTime.value, trace_.txs[i].closeTick != 0,
                           trace_.txs[i].closeTick});
  // Wraps that opened but never committed are permanently open.
  {
    std::map<uint32_t, int64_t> balance;
    std::map<uint32_t, std::vector<uint64_t>> openStarts;
    for (const Event& e : trace_.events) {
      if (e.kind == EventKind::WrapOpen) {
        balance[e.thread] += 1;
        openStarts[e.thread].push_back(e.value);
      } else if (e.kind == EventKind::WrapClose) {
        balance[e.thread] -= 1;
      }
    }
    for (auto& [t, b] : balance)
      for (int64_t k = 0; k < b; ++k) {
        uint64_t start = openStarts[t][openStarts[t].size() - 1 - static_cast<size_t>(k)];
        intervals.push_back({start, false, 0});
      }
  }
  for (const Event& e : trace_.events) {
    if (e.kind != EventKind::PmWrite || e.producerTx < 0) continue;
    if (layout_.region(Address{e.line}) != Region::Home) continue;
    const TxRecord& X = trace_.txs[static_cast<size_t>(e.producerTx)];
    if (!X.persistTime.valid()) continue;
    for (const OpenInterval& Y : intervals) {
      if (Y.start >= X.persistTime.value) continue;
      if (!Y.closed || Y.closeTick >= e.tick) {
        std::ostringstream os;
        os << "C2: update of tx#" << e.producerTx << " hit PM at " << e.tick
           << " while a wrap started at " << Y.start << " had not closed";
        return Verdict::fail(os.str());
      }
    }
  }

  // C4: at close time, an update in PM implies every predecessor's log is
  // durable.
  for (uint32_t x = 0; x < n_; ++x) {
    const TxRecord& X = trace_.txs[x];
    if (X.closeTick == 0 || !X.startTime.valid()) continue;
    if (facts_[x].firstHomePmWrite == 0 || facts_[x].firstHomePmWrite > X.closeTick) continue;
    for (uint32_t y = 0; y < n_; ++y) {
      if (!((precClosure_[x] >> y) & 1)) continue;
      if (facts_[y].logDurableTick == 0 || facts_[y].logDurableTick > X.closeTick) {
        std::ostringstream os;
        os << "C4: tx#" << x << " had an update in PM at close, but predecessor tx#" << y
           << " had no durable log";
        return Verdict::fail(os.str());
      }
    }
  }
  return Verdict::pass();
}

Verdict TraceChecker::checkSerializability() const {
  std::map<uint64_t, uint64_t> model;
  for (uint32_t i = 0; i < n_; ++i) {
    const TxRecord& tx = trace_.txs[i];
    for (const auto& r : tx.reads) {
      uint64_t expect = 0;
      auto it = model.find(r.addr.line);
      if (it != model.end()) expect = it->second;
      if (r.value.word != expect) {
        std::ostringstream os;
        os << "serializability: tx#" << i << " read line " << r.addr.line << " = "
           << r.value.word << ", commit-order replay expected " << expect;
        return Verdict::fail(os.str());
      }
    }
    for (const auto& w : tx.writeSet) model[w.addr.line] = w.value.word;
  }
  return Verdict::pass();
}

}  // namespace wrapsim
