#include "wrapsim/workloads.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>

namespace wrapsim {

const char* to_string(WorkloadKind k) {
  switch (k) {
    case WorkloadKind::Hashtable: return "hashtable";
    case WorkloadKind::CounterVector: return "counter";
    case WorkloadKind::Rbtree: return "rbtree";
    case WorkloadKind::Scripted: return "scripted";
  }
  return "?";
}

const char* to_string(Method m) {
  switch (m) {
    case Method::Wrap: return "wrap";
    case Method::WrapStrict: return "wrap-strict";
    case Method::HtmOnly: return "htm-only";
    case Method::PtlEager: return "ptl-eager";
  }
  return "?";
}

namespace {

uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// ---------------------------------------------------------------------------
// PTL-Eager: encounter-time exclusive locks, read validation, eagerly
// persisted undo entries, data flush + undo retirement at commit.

struct PtlAbortTx {};

struct PtlRuntime {
  explicit PtlRuntime(const SimConfig& cfg)
      : lockOwner(cfg.homeLines, -1), version(cfg.homeLines, 0) {}
  std::vector<int32_t> lockOwner;
  std::vector<uint64_t> version;
  uint64_t committed = 0;
  uint64_t aborts = 0;
};

struct PtlTx {
  std::vector<std::pair<uint64_t, uint64_t>> readVersions;
  std::vector<std::pair<uint64_t, uint64_t>> undo;  // line, old value
  std::vector<uint64_t> locked;
  std::vector<uint64_t> writtenLines;
  std::vector<LogEntry> writes;  // logical order, new values
  bool undoOpen = false;
};

class PtlOps : public TxOps {
 public:
  PtlOps(Engine& eng, PtlRuntime& rt, uint32_t t, PtlTx& tx)
      : eng_(eng), rt_(rt), t_(t), tx_(tx) {}

  Co<void> store(uint64_t line, uint64_t value) override {
    if (rt_.lockOwner.at(line) != -1 && rt_.lockOwner[line] != int32_t(t_))
      throw PtlAbortTx{};
    if (rt_.lockOwner[line] == -1) {
      co_await eng_.tick(t_, TickKind::Access);
      rt_.lockOwner[line] = int32_t(t_);
      tx_.locked.push_back(line);
    }
    co_await eng_.tick(t_, TickKind::Access);
    uint64_t old = eng_.memRead(t_, Address{line}).word;
    co_await persistUndoEntry(line, old);
    co_await eng_.tick(t_, TickKind::Access);
    eng_.memStore(t_, Address{line}, CacheLineValue{value});
    tx_.undo.push_back({line, old});
    tx_.writtenLines.push_back(line);
    tx_.writes.push_back(LogEntry{Address{line}, CacheLineValue{value}});
  }

  Co<CacheLineValue> read(uint64_t line) override {
    if (rt_.lockOwner.at(line) != -1 && rt_.lockOwner[line] != int32_t(t_))
      throw PtlAbortTx{};
    co_await eng_.tick(t_, TickKind::Access);
    CacheLineValue v = eng_.memRead(t_, Address{line});
    if (rt_.lockOwner[line] != int32_t(t_))
      tx_.readVersions.push_back({line, rt_.version[line]});
    co_return v;
  }

 private:
  Co<void> persistUndoEntry(uint64_t line, uint64_t old) {
    const MemLayout& L = eng_.layout();
    uint32_t k = static_cast<uint32_t>(tx_.undo.size());
    if (k >= L.writeSetCapacity)
      throw SimError(Err::ConfigError, "PTL undo area exceeded");
    co_await eng_.tick(t_, TickKind::FlushBatch);
    if (!tx_.undoOpen) {
      eng_.memStore(t_, L.ptlLine(t_, 0), CacheLineValue{1});  // status: active
      eng_.memClwb(t_, L.ptlLine(t_, 0));
      tx_.undoOpen = true;
    }
    eng_.memStore(t_, L.ptlLine(t_, 2 + 2ull * k), CacheLineValue{line});
    eng_.memClwb(t_, L.ptlLine(t_, 2 + 2ull * k));
    eng_.memStore(t_, L.ptlLine(t_, 3 + 2ull * k), CacheLineValue{old});
    eng_.memClwb(t_, L.ptlLine(t_, 3 + 2ull * k));
    eng_.memStore(t_, L.ptlLine(t_, 1), CacheLineValue{k + 1});  // count, staged last
    eng_.memClwb(t_, L.ptlLine(t_, 1));
    co_await eng_.tick(t_, TickKind::FlushLine);
    eng_.memSfence(t_);
  }

  Engine& eng_;
  PtlRuntime& rt_;
  uint32_t t_;
  PtlTx& tx_;
};

Co<void> ptlRollback(Engine& eng, PtlRuntime& rt, uint32_t t, PtlTx& tx) {
  const MemLayout& L = eng.layout();
  // Restore in-place values (some may already have leaked to PM via
  // evictions), flush the restorations, then retire the undo entries.
  for (auto it = tx.undo.rbegin(); it != tx.undo.rend(); ++it) {
    co_await eng.tick(t, TickKind::Access);
    eng.memStore(t, Address{it->first}, CacheLineValue{it->second});
    eng.memClwb(t, Address{it->first});
  }
  co_await eng.tick(t, TickKind::FlushLine);
  eng.memSfence(t);
  if (tx.undoOpen) {
    co_await eng.tick(t, TickKind::FlushBatch);
    eng.memStore(t, L.ptlLine(t, 0), CacheLineValue{0});
    eng.memClwb(t, L.ptlLine(t, 0));
    eng.memStore(t, L.ptlLine(t, 1), CacheLineValue{0});
    eng.memClwb(t, L.ptlLine(t, 1));
    co_await eng.tick(t, TickKind::FlushLine);
    eng.memSfence(t);
  }
  for (uint64_t line : tx.locked) rt.lockOwner[line] = -1;
}

Co<void> ptlTransaction(Engine& eng, PtlRuntime& rt, uint32_t t, const TxBody& body) {
  uint32_t retries = 0;
  for (;;) {
    PtlTx tx;
    PtlOps ops(eng, rt, t, tx);
    bool aborted = false;
    try {
      co_await body(ops);
      // Read validation under the held write locks.
      for (const auto& [line, ver] : tx.readVersions) {
        if (rt.version[line] != ver ||
            (rt.lockOwner[line] != -1 && rt.lockOwner[line] != int32_t(t)))
          throw PtlAbortTx{};
      }
    } catch (const PtlAbortTx&) {
      aborted = true;
    }
    if (aborted) {
      ++rt.aborts;
      co_await ptlRollback(eng, rt, t, tx);
      ++retries;
      co_await eng.sleepFor(t, 1 + (eng.rng()() % (1u << std::min(retries, 8u))));
      continue;
    }
    // Commit: flush new values, retire the undo log, then release. The
    // commit point for the trace sits after the data flush and before the
    // undo retirement: a crash in between leaves the undo active, so the
    // transaction is rolled back and the recovered state is still a prefix.
    const MemLayout& L = eng.layout();
    TxRecord rec;
    rec.wrap = WrapId{t};
    if (!tx.writtenLines.empty()) {
      co_await eng.tick(t, TickKind::FlushBatch);
      for (uint64_t line : tx.writtenLines) {
        eng.memClwb(t, Address{line});
        co_await eng.tick(t, TickKind::FlushLine);
      }
      eng.memSfence(t);
      rec.commitTick = eng.clock();
      co_await eng.tick(t, TickKind::FlushBatch);
      eng.memStore(t, L.ptlLine(t, 0), CacheLineValue{0});
      eng.memClwb(t, L.ptlLine(t, 0));
      eng.memStore(t, L.ptlLine(t, 1), CacheLineValue{0});
      eng.memClwb(t, L.ptlLine(t, 1));
      co_await eng.tick(t, TickKind::FlushLine);
      eng.memSfence(t);
    } else {
      rec.commitTick = eng.clock();
    }
    co_await eng.tick(t, TickKind::Local);
    for (uint64_t line : tx.writtenLines) rt.version[line] += 1;
    for (uint64_t line : tx.locked) rt.lockOwner[line] = -1;
    ++rt.committed;
    // Two-phase locking serializes transactions in commit order; the chain
    // precedence makes the oracle's state set exactly the commit prefixes,
    // which is what PTL recovery restores.
    rec.txSeq = static_cast<int32_t>(eng.trace().txs.size());
    if (rec.txSeq > 0) rec.directPrec.push_back(rec.txSeq - 1);
    rec.writeSet = tx.writes;
    eng.appendTx(std::move(rec));
    co_return;
  }
}

PmImage ptlRecoverImpl(const PmImage& image) {
  PmImage out = image;
  const MemLayout& L = image.layout();
  for (uint32_t t = 0; t < L.threads; ++t) {
    if (out.read(L.ptlLine(t, 0)).word != 1) continue;  // no active transaction
    uint64_t count = out.read(L.ptlLine(t, 1)).word;
    for (uint64_t k = count; k-- > 0;) {
      uint64_t line = out.read(L.ptlLine(t, 2 + 2 * k)).word;
      uint64_t old = out.read(L.ptlLine(t, 3 + 2 * k)).word;
      out.write(Address{line}, CacheLineValue{old});
    }
    out.write(L.ptlLine(t, 0), CacheLineValue{0});
    out.write(L.ptlLine(t, 1), CacheLineValue{0});
  }
  return out;
}

// ---------------------------------------------------------------------------
// HTM-only: concurrency without logging, persistence, or the controller.

class RawOps : public TxOps {
 public:
  RawOps(Engine& eng, uint32_t t) : eng_(eng), t_(t) {}
  Co<void> store(uint64_t line, uint64_t value) override {
    co_await eng_.tick(t_, TickKind::Access);
    eng_.memStore(t_, Address{line}, CacheLineValue{value});
  }
  Co<CacheLineValue> read(uint64_t line) override {
    co_await eng_.tick(t_, TickKind::Access);
    co_return eng_.memRead(t_, Address{line});
  }

 private:
  Engine& eng_;
  uint32_t t_;
};

Co<void> htmOnlyTransaction(Engine& eng, uint32_t t, const TxBody& body) {
  Htm& htm = eng.htm();
  uint32_t retries = 0;
  for (;;) {
    bool began = false;
    while (!began) {
      if (retries > eng.cfg().htm.retryThreshold) {
        co_await eng.waitUntil(t, [&htm] { return htm.lockFree(); });
        if (!htm.lockFree()) continue;  // lost the wakeup race
        htm.acquireLock(eng, t);
        co_await eng.tick(t, TickKind::Access);
        htm.tryBegin(t, WrapId{t}, true);
        began = true;
        break;
      }
      co_await eng.tick(t, TickKind::Local);
      if (htm.tryBegin(t, WrapId{t}, false)) {
        began = true;
        break;
      }
      ++retries;
      co_await eng.sleepFor(t, 1 + (eng.rng()() % (1u << std::min(retries, 10u))));
    }
    bool aborted = false;
    try {
      RawOps ops(eng, t);
      co_await body(ops);
      co_await eng.tick(t, TickKind::Commit);
      Htm::CommitInfo info = eng.htm().end(eng, t);
      TxRecord rec;
      rec.txSeq = info.txSeq;
      rec.wrap = WrapId{t};
      rec.commitTick = eng.clock();
      for (const auto& w : info.writesOrdered)
        if (eng.layout().region(w.addr) == Region::Home) rec.writeSet.push_back(w);
      for (const auto& r : info.readsObserved)
        if (eng.layout().region(r.addr) == Region::Home) rec.reads.push_back(r);
      rec.directPrec = info.directPrec;
      eng.appendTx(std::move(rec));
    } catch (const HtmAbort&) {
      aborted = true;
    }
    if (!aborted) co_return;
    ++retries;
    co_await eng.sleepFor(t, 1 + (eng.rng()() % (1u << std::min(retries, 10u))));
  }
}

// ---------------------------------------------------------------------------
// Red-black tree over simulated lines. Node i occupies two lines: the key
// and a packed link word (red flag | left+1 | right+1).

struct RbRegion {
  uint64_t metaLine = 0;   // root pointer (index+1, 0 = empty)
  uint64_t nodesBase = 1;  // node i at nodesBase + 2i
};

constexpr uint64_t kRbRed = uint64_t{1} << 63;

uint64_t packLink(bool red, uint64_t left, uint64_t right) {
  return (red ? kRbRed : 0) | (left << 32) | right;
}
bool linkRed(uint64_t w) { return (w & kRbRed) != 0; }
uint64_t linkLeft(uint64_t w) { return (w >> 32) & 0x7fffffffull; }
uint64_t linkRight(uint64_t w) { return w & 0xffffffffull; }

struct RbCursor {  // host-side mirror of one node's lines
  uint64_t idx;    // index+1 form
  uint64_t key;
  uint64_t link;
};

Co<RbCursor> rbLoad(TxOps& ops, const RbRegion& r, uint64_t idx1) {
  RbCursor c;
  c.idx = idx1;
  c.key = (co_await ops.read(r.nodesBase + 2 * (idx1 - 1))).word;
  c.link = (co_await ops.read(r.nodesBase + 2 * (idx1 - 1) + 1)).word;
  co_return c;
}

Co<void> rbStoreLink(TxOps& ops, const RbRegion& r, uint64_t idx1, uint64_t link) {
  co_await ops.store(r.nodesBase + 2 * (idx1 - 1) + 1, link);
}

// Insert with an explicit ancestor stack; standard recolor/rotate fixup.
// Returns false when the key was already present.
Co<bool> rbInsert(TxOps& ops, const RbRegion& r, uint64_t key, uint64_t newIdx1) {
  uint64_t root = (co_await ops.read(r.metaLine)).word;
  if (root == 0) {
    co_await ops.store(r.nodesBase + 2 * (newIdx1 - 1), key);
    co_await rbStoreLink(ops, r, newIdx1, packLink(false, 0, 0));
    co_await ops.store(r.metaLine, newIdx1);
    co_return true;
  }

  std::vector<RbCursor> path;
  uint64_t cur = root;
  while (cur != 0) {
    RbCursor c = co_await rbLoad(ops, r, cur);
    if (key == c.key) co_return false;  // set semantics: duplicate is a no-op
    path.push_back(c);
    cur = key < c.key ? linkLeft(c.link) : linkRight(c.link);
  }

  co_await ops.store(r.nodesBase + 2 * (newIdx1 - 1), key);
  co_await rbStoreLink(ops, r, newIdx1, packLink(true, 0, 0));
  {
    RbCursor& p = path.back();
    if (key < p.key) {
      p.link = packLink(linkRed(p.link), newIdx1, linkRight(p.link));
    } else {
      p.link = packLink(linkRed(p.link), linkLeft(p.link), newIdx1);
    }
    co_await rbStoreLink(ops, r, p.idx, p.link);
  }

  // Fixup. z is the current (red) node; path holds its ancestors.
  RbCursor z{newIdx1, key, packLink(true, 0, 0)};
  while (!path.empty() && linkRed(path.back().link)) {
    RbCursor parent = path.back();
    path.pop_back();
    if (path.empty()) break;  // parent is the root; handled after the loop
    RbCursor grand = path.back();
    path.pop_back();
    bool parentIsLeft = linkLeft(grand.link) == parent.idx;
    uint64_t uncleIdx = parentIsLeft ? linkRight(grand.link) : linkLeft(grand.link);
    if (uncleIdx != 0) {
      RbCursor uncle = co_await rbLoad(ops, r, uncleIdx);
      if (linkRed(uncle.link)) {
        // Recolor and continue from the grandparent.
        parent.link &= ~kRbRed;
        uncle.link &= ~kRbRed;
        grand.link |= kRbRed;
        co_await rbStoreLink(ops, r, parent.idx, parent.link);
        co_await rbStoreLink(ops, r, uncle.idx, uncle.link);
        co_await rbStoreLink(ops, r, grand.idx, grand.link);
        z = grand;
        continue;
      }
    }
    // Rotation cases. Normalize so z is on the outside of parent.
    bool zIsLeft = linkLeft(parent.link) == z.idx;
    if (parentIsLeft != zIsLeft) {
      // Inner case: rotate z above parent first.
      uint64_t zl = linkLeft(z.link), zr = linkRight(z.link);
      if (parentIsLeft) {  // parent left of grand, z right of parent
        parent.link = packLink(true, linkLeft(parent.link), zl);
        z.link = packLink(true, parent.idx, zr);
      } else {
        parent.link = packLink(true, zr, linkRight(parent.link));
        z.link = packLink(true, zl, parent.idx);
      }
      co_await rbStoreLink(ops, r, parent.idx, parent.link);
      std::swap(z, parent);  // parent is now the lower node
      zIsLeft = parentIsLeft;
    }
    // Outer case: rotate parent above grandparent; recolor.
    uint64_t pl = linkLeft(parent.link), pr = linkRight(parent.link);
    if (parentIsLeft) {
      grand.link = packLink(true, pr, linkRight(grand.link));
      parent.link = packLink(false, pl, grand.idx);
    } else {
      grand.link = packLink(true, linkLeft(grand.link), pl);
      parent.link = packLink(false, grand.idx, pr);
    }
    co_await rbStoreLink(ops, r, grand.idx, grand.link);
    co_await rbStoreLink(ops, r, parent.idx, parent.link);
    // Reattach to the great-grandparent (or the root pointer).
    if (path.empty()) {
      co_await ops.store(r.metaLine, parent.idx);
    } else {
      RbCursor& gg = path.back();
      if (linkLeft(gg.link) == grand.idx) {
        gg.link = packLink(linkRed(gg.link), parent.idx, linkRight(gg.link));
      } else {
        gg.link = packLink(linkRed(gg.link), linkLeft(gg.link), parent.idx);
      }
      co_await rbStoreLink(ops, r, gg.idx, gg.link);
    }
    break;
  }

  // Root stays black.
  uint64_t rootNow = (co_await ops.read(r.metaLine)).word;
  RbCursor rc = co_await rbLoad(ops, r, rootNow);
  if (linkRed(rc.link)) co_await rbStoreLink(ops, r, rootNow, rc.link & ~kRbRed);
  co_return true;
}

}  // namespace

std::vector<uint64_t> rbtreeKeys(const std::vector<uint64_t>& home, uint64_t metaLine) {
  std::vector<uint64_t> keys;
  std::vector<uint64_t> stack;
  if (home.at(metaLine) != 0) stack.push_back(home[metaLine]);
  while (!stack.empty()) {
    uint64_t idx1 = stack.back();
    stack.pop_back();
    uint64_t key = home.at(metaLine + 1 + 2 * (idx1 - 1));
    uint64_t link = home.at(metaLine + 1 + 2 * (idx1 - 1) + 1);
    keys.push_back(key);
    if (linkLeft(link)) stack.push_back(linkLeft(link));
    if (linkRight(link)) stack.push_back(linkRight(link));
  }
  std::sort(keys.begin(), keys.end());
  return keys;
}

bool rbtreeValid(const std::vector<uint64_t>& home, uint64_t metaLine, std::string* why) {
  struct Walker {
    const std::vector<uint64_t>& home;
    uint64_t base;
    std::string* why;
    bool ok = true;
    // Returns black height, 0 on failure.
    int walk(uint64_t idx1, uint64_t lo, uint64_t hi, bool parentRed) {
      if (idx1 == 0) return 1;
      uint64_t key = home.at(base + 2 * (idx1 - 1));
      uint64_t link = home.at(base + 2 * (idx1 - 1) + 1);
      if (key < lo || key > hi) {
        if (why) *why = "BST order violated";
        ok = false;
        return 1;
      }
      if (parentRed && linkRed(link)) {
        if (why) *why = "red-red violation";
        ok = false;
        return 1;
      }
      int lh = walk(linkLeft(link), lo, key ? key - 1 : 0, linkRed(link));
      int rh = walk(linkRight(link), key + 1, hi, linkRed(link));
      if (ok && lh != rh) {
        if (why) *why = "unequal black heights";
        ok = false;
      }
      return lh + (linkRed(link) ? 0 : 1);
    }
  };
  uint64_t root = home.at(metaLine);
  if (root == 0) return true;
  uint64_t rootLink = home.at(metaLine + 1 + 2 * (root - 1) + 1);
  if (linkRed(rootLink)) {
    if (why) *why = "red root";
    return false;
  }
  Walker w{home, metaLine + 1, why};
  w.walk(root, 0, ~uint64_t{0}, false);
  return w.ok;
}

PmImage ptlRecover(const PmImage& image) { return ptlRecoverImpl(image); }

// ---------------------------------------------------------------------------
// Workload harness.

namespace {

struct OpItem {
  enum class Kind { Write, Read, Rmw } kind = Kind::Write;
  uint64_t line = 0;
  uint64_t value = 0;
};

TxBody makeListBody(std::vector<OpItem> ops) {
  return [ops](TxOps& t) -> Co<void> {
    for (const OpItem& op : ops) {
      switch (op.kind) {
        case OpItem::Kind::Write:
          co_await t.store(op.line, op.value);
          break;
        case OpItem::Kind::Read:
          co_await t.read(op.line);
          break;
        case OpItem::Kind::Rmw: {
          CacheLineValue v = co_await t.read(op.line);
          co_await t.store(op.line, v.word + 1);
          break;
        }
      }
    }
  };
}

// Counts logical accesses (per attempt, aborted ones included).
struct CountingOps : TxOps {
  TxOps& in;
  RunMetrics& m;
  CountingOps(TxOps& i, RunMetrics& mm) : in(i), m(mm) {}
  Co<void> store(uint64_t l, uint64_t v) override {
    ++m.writes;
    return in.store(l, v);
  }
  Co<CacheLineValue> read(uint64_t l) override {
    ++m.reads;
    return in.read(l);
  }
};

TxBody counted(TxBody inner, RunMetrics* m) {
  return [inner, m](TxOps& ops) -> Co<void> {
    CountingOps c(ops, *m);
    co_await inner(c);
  };
}

struct Harness {
  WorkloadSpec spec;
  SimConfig cfg;
  Method method;
  std::vector<std::vector<TxBody>> perThreadTxs;
  std::unique_ptr<WrapLib> lib;
  std::unique_ptr<PtlRuntime> ptl;
  RunMetrics metrics;
  uint32_t doneThreads = 0;
  RbRegion rbRegion;
  std::vector<uint64_t> rbAllocCursor;  // per-thread node pools (index+1 form)
};

Durability durabilityFor(Method m) {
  return m == Method::WrapStrict ? Durability::StrictSoftware : Durability::Relaxed;
}

ThreadTask workerBody(Engine& eng, Harness& h, uint32_t t) {
  for (TxBody& body : h.perThreadTxs[t]) {
    uint64_t begin = eng.clock();
    switch (h.method) {
      case Method::Wrap:
      case Method::WrapStrict: {
        TxBody* b = &body;
        co_await h.lib->runTransaction(t, durabilityFor(h.method),
                                       [b](WrapLib::Ctx& c) -> Co<void> {
                                         struct WrapOps : TxOps {
                                           WrapLib::Ctx& c;
                                           explicit WrapOps(WrapLib::Ctx& cc) : c(cc) {}
                                           Co<void> store(uint64_t l, uint64_t v) override {
                                             return c.store(l, v);
                                           }
                                           Co<CacheLineValue> read(uint64_t l) override {
                                             return c.read(l);
                                           }
                                         } ops(c);
                                         co_await (*b)(ops);
                                       });
        break;
      }
      case Method::HtmOnly:
        co_await htmOnlyTransaction(eng, t, body);
        break;
      case Method::PtlEager:
        co_await ptlTransaction(eng, *h.ptl, t, body);
        break;
    }
    uint64_t lat = eng.clock() - begin;
    h.metrics.latencySum += lat;
    unsigned bucket = lat == 0 ? 0 : std::min(31u, unsigned(64 - __builtin_clzll(lat)));
    h.metrics.latencyHistogram[bucket] += 1;
  }

  h.doneThreads += 1;
  if (t == 0) {
    co_await eng.waitUntil(0, [&h] { return h.doneThreads == h.perThreadTxs.size(); });
    // Drain to quiescence so the PM home image is the full logical state.
    if (h.method == Method::Wrap || h.method == Method::WrapStrict) {
      co_await h.lib->logCleanup(0);
    } else {
      std::vector<uint64_t> dirty = eng.cache().dirtyHomeLines();
      co_await eng.tick(0, TickKind::FlushBatch);
      for (uint64_t line : dirty) {
        eng.memClwb(0, Address{line});
        co_await eng.tick(0, TickKind::FlushLine);
      }
      eng.memSfence(0);
    }
  }
}

void buildBodies(Harness& h) {
  const WorkloadSpec& spec = h.spec;
  h.perThreadTxs.resize(spec.threads);
  uint64_t perThread = spec.txCount / spec.threads;
  uint64_t extra = spec.txCount % spec.threads;

  for (uint32_t t = 0; t < spec.threads; ++t) {
    std::mt19937_64 rng(mix64(spec.seed) ^ (uint64_t{t} << 32));
    uint64_t txs = perThread + (t < extra ? 1 : 0);
    for (uint64_t i = 0; i < txs; ++i) {
      switch (spec.kind) {
        case WorkloadKind::Hashtable: {
          std::vector<OpItem> ops;
          for (uint32_t k = 0; k < spec.writesPerTx; ++k) {
            uint64_t key = rng();
            uint64_t line = mix64(key) % spec.tableLines;
            bool isWrite = std::uniform_real_distribution<double>(0, 1)(rng) <
                           spec.readWriteRatio;
            if (isWrite) {
              uint64_t value = spec.randomValues ? rng() : mix64(line) | 1;
              ops.push_back({OpItem::Kind::Write, line, value});
            } else {
              ops.push_back({OpItem::Kind::Read, line, 0});
            }
          }
          h.perThreadTxs[t].push_back(counted(makeListBody(std::move(ops)), &h.metrics));
          break;
        }
        case WorkloadKind::CounterVector: {
          std::vector<OpItem> ops;
          for (uint32_t k = 0; k < spec.writesPerTx; ++k)
            ops.push_back({OpItem::Kind::Rmw, rng() % spec.tableLines, 0});
          h.perThreadTxs[t].push_back(counted(makeListBody(std::move(ops)), &h.metrics));
          break;
        }
        case WorkloadKind::Rbtree: {
          uint64_t key = 1 + rng() % (spec.rbInitial * 64 + 1024);
          Harness* hp = &h;
          uint32_t tt = t;
          h.perThreadTxs[t].push_back(counted(
              [hp, tt, key](TxOps& ops) -> Co<void> {
                uint64_t idx1 = hp->rbAllocCursor[tt];
                bool inserted = co_await rbInsert(ops, hp->rbRegion, key, idx1);
                if (inserted) hp->rbAllocCursor[tt] = idx1 + 1;
              },
              &h.metrics));
          break;
        }
        case WorkloadKind::Scripted:
          throw SimError(Err::ConfigError, "scripted workloads run through the golden driver");
      }
    }
  }
}

// Seeds the tree by running inserts synchronously against the raw image.
struct DirectOps : TxOps {
  PmImage& pm;
  explicit DirectOps(PmImage& p) : pm(p) {}
  Co<void> store(uint64_t line, uint64_t value) override {
    pm.write(Address{line}, CacheLineValue{value});
    co_return;
  }
  Co<CacheLineValue> read(uint64_t line) override { co_return pm.read(Address{line}); }
};

ThreadTask seedTask(Co<void> co) {
  co_await std::move(co);
}

void runSync(Co<void> co) {
  ThreadTask task = seedTask(std::move(co));
  task.handle().resume();
  if (!task.finished()) throw std::logic_error("synchronous coroutine suspended");
}

}  // namespace

RunMetrics runWorkload(const WorkloadSpec& spec, const ScheduleConfig& sched, Method method,
                       const SimConfig* base, RunArtifacts* artifacts) {
  Harness h;
  h.spec = spec;
  h.method = method;
  h.cfg = base ? *base : SimConfig{};
  h.cfg.threads = spec.threads;
  if (spec.kind == WorkloadKind::Rbtree) {
    uint64_t nodes = spec.rbInitial + spec.txCount + 2ull * spec.threads + 8;
    h.cfg.homeLines = std::max<uint64_t>(h.cfg.homeLines, 1 + 2 * nodes + 16);
  } else {
    h.cfg.homeLines = std::max<uint64_t>(spec.tableLines, 16);
  }
  h.cfg.validate();

  Engine eng(h.cfg, sched);
  if (method == Method::Wrap || method == Method::WrapStrict) h.lib = std::make_unique<WrapLib>(eng);
  if (method == Method::PtlEager) h.ptl = std::make_unique<PtlRuntime>(h.cfg);

  if (spec.kind == WorkloadKind::Rbtree) {
    h.rbRegion = RbRegion{0, 1};
    h.rbAllocCursor.resize(spec.threads);
    // Seed the tree directly in the image, then hand threads disjoint pools.
    std::mt19937_64 seedRng(mix64(spec.seed ^ 0xdead));
    DirectOps direct(eng.pm());
    uint64_t next = 1;
    for (uint64_t i = 0; i < spec.rbInitial; ++i) {
      uint64_t key = 1 + seedRng() % (spec.rbInitial * 64 + 1024);
      bool inserted = false;
      runSync([&]() -> Co<void> {
        inserted = co_await rbInsert(direct, h.rbRegion, key, next);
      }());
      if (inserted) ++next;
    }
    uint64_t perThreadPool = spec.txCount / spec.threads + 2;
    for (uint32_t t = 0; t < spec.threads; ++t)
      h.rbAllocCursor[t] = next + uint64_t{t} * perThreadPool;
  }

  buildBodies(h);
  for (uint32_t t = 0; t < spec.threads; ++t)
    eng.addThread([&h](Engine& e, uint32_t tt) { return workerBody(e, h, tt); });

  RandomOracle oracle(sched.seed, sched.evictionRate);
  eng.run(oracle);

  h.metrics.simTicks = eng.clock();
  h.metrics.aborts = eng.htm().abortCount() + (h.ptl ? h.ptl->aborts : 0);
  h.metrics.committedTx = h.ptl ? h.ptl->committed
                                : static_cast<uint64_t>(eng.htm().committedCount());
  h.metrics.maxVdbDepth = eng.controller().maxVdbDepth();
  h.metrics.maxDwqDepth = eng.controller().maxDwqDepth();
  h.metrics.cleanups = h.lib ? h.lib->cleanupCount() : 0;

  if (!eng.crashed() && eng.controller().vdbDepth() != 0)
    throw std::logic_error("VDB not empty at quiescence");

  if (artifacts) {
    artifacts->trace = eng.trace();
    artifacts->trace.finalTick = eng.clock();
    artifacts->layout = eng.layout();
    artifacts->finalHome = eng.pm().homeSnapshot();
  }
  return h.metrics;
}

void emitCsvHeader(std::ostream& os) {
  os << "workload,method,threads,txCount,writesPerTx,rwRatio,pmWriteCost,seed,"
        "simTicks,committedTx,aborts,maxVdbDepth,maxDwqDepth,meanTxLatency,"
        "reads,writes,cleanups\n";
}

void emitCsvRow(std::ostream& os, const WorkloadSpec& spec, Method method,
                const SimConfig& cfg, const ScheduleConfig& sched, const RunMetrics& m) {
  os << to_string(spec.kind) << ',' << to_string(method) << ',' << spec.threads << ','
     << spec.txCount << ',' << spec.writesPerTx << ',' << spec.readWriteRatio << ','
     << cfg.costs.pmWriteCost << ',' << sched.seed << ',' << m.simTicks << ','
     << m.committedTx << ',' << m.aborts << ',' << m.maxVdbDepth << ',' << m.maxDwqDepth
     << ',' << m.meanLatency() << ',' << m.reads << ',' << m.writes << ',' << m.cleanups
     << '\n';
}

}  // namespace wrapsim
