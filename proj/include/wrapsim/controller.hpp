#pragma once

#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "wrapsim/config.hpp"
#include "wrapsim/pm_image.hpp"
#include "wrapsim/trace.hpp"
#include "wrapsim/types.hpp"

namespace wrapsim {

// Engine-side observer for controller effects: durable writes, buffer
// inserts, strict-durability signals. Null hooks are fine for unit tests.
class ControllerHooks {
 public:
  virtual ~ControllerHooks() = default;
  virtual void onPmWrite(Address, CacheLineValue, PmWriteSource, int32_t) {}
  virtual void onVdbInsert(Address, CacheLineValue, int32_t) {}
  virtual void onStrictSignal(uint32_t) {}
};

struct VdbEntry {
  Address addr;
  CacheLineValue data;
  DependencySet ds;
  uint64_t seq = 0;       // insertion sequence, keys the address index
  int32_t producerTx = -1;  // checker provenance, not protocol state
};

struct DwqEntry {
  DependencySet ds;
  uint32_t token = 0;  // per-thread durability mailbox index
};

// The persistent memory controller: Current Open Transactions set, Volatile
// Delay Buffer (FIFO + address index), and Dependency Wait Queue. Entry
// points execute atomically with respect to each other.
class Controller {
 public:
  Controller(PmImage& pm, uint32_t threads, const Mutations& mut = {},
             ControllerHooks* hooks = nullptr)
      : pm_(pm), threads_(threads), mut_(mut), hooks_(hooks), mailboxes_(threads, 0) {}

  void openWrap(WrapId w);
  void closeWrap(WrapId w, std::optional<uint32_t> durabilityToken);
  void memoryWrite(Address a, CacheLineValue v, int32_t producerTx = -1);
  CacheLineValue memoryRead(Address a) const;

  bool isOpen(WrapId w) const { return cot_.test(w); }
  bool cotEmpty() const { return cot_.empty(); }
  const DependencySet& cot() const { return cot_; }
  size_t vdbDepth() const { return vdb_.size(); }
  size_t dwqDepth() const { return dwq_.size(); }
  uint64_t maxVdbDepth() const { return maxVdbDepth_; }
  uint64_t maxDwqDepth() const { return maxDwqDepth_; }

  uint8_t mailbox(uint32_t token) const { return mailboxes_.at(token); }
  void resetMailbox(uint32_t token) { mailboxes_.at(token) = 0; }

  // Volatile state vanishes at a crash; the PmImage stays.
  void discardVolatile();

  // JSON state dump: {"cot":[...], "vdb":[{addr,value,ds},... head first],
  // "dwq":[{ds,token},...]}. Bit vectors are printed at thread width.
  std::string dumpJson() const;

  std::unique_lock<std::mutex> lockForStress() { return std::unique_lock(mu_); }

 private:
  void drainReadyHeads();
  void checkFifoInvariant() const;

  PmImage& pm_;
  uint32_t threads_;
  Mutations mut_;
  ControllerHooks* hooks_;

  DependencySet cot_;
  std::deque<VdbEntry> vdb_;
  std::unordered_map<uint64_t, uint64_t> index_;  // line -> seq of latest entry
  uint64_t nextSeq_ = 0;
  std::deque<DwqEntry> dwq_;
  std::vector<uint8_t> mailboxes_;

  uint64_t maxVdbDepth_ = 0;
  uint64_t maxDwqDepth_ = 0;
  mutable std::mutex mu_;  // stress mode only; deterministic mode is single-threaded
};

}  // namespace wrapsim
