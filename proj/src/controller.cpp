#include "wrapsim/controller.hpp"

#include <cassert>

#include "json.hpp"

namespace wrapsim {

void Controller::openWrap(WrapId w) {
  std::lock_guard lk(mu_);
  if (w.id >= threads_) throw SimError(Err::ConfigError, "wrapId out of range");
  if (cot_.test(w)) throw SimError(Err::DuplicateOpen, "wrap already open");
  cot_.set(w);
}

void Controller::memoryWrite(Address a, CacheLineValue v, int32_t producerTx) {
  std::lock_guard lk(mu_);
  bool passThrough = pm_.layout().region(a) == Region::Log;
  if (passThrough || cot_.empty() || mut_.drainImmediately) {
    pm_.write(a, v);
    if (hooks_)
      hooks_->onPmWrite(a, v, passThrough ? PmWriteSource::PassThrough : PmWriteSource::DirectHome,
                        producerTx);
    return;
  }
  // Tag with the COT at entry; the new tag is a superset of every older
  // entry's remaining dependencies, so sets empty out in FIFO order.
  VdbEntry e{a, v, cot_, nextSeq_++, producerTx};
  vdb_.push_back(e);
  index_[a.line] = e.seq;
  maxVdbDepth_ = std::max<uint64_t>(maxVdbDepth_, vdb_.size());
  if (hooks_) hooks_->onVdbInsert(a, v, producerTx);
  checkFifoInvariant();
  drainReadyHeads();  // opportunistic head check; a no-op unless COT raced empty
}

CacheLineValue Controller::memoryRead(Address a) const {
  std::lock_guard lk(mu_);
  auto it = index_.find(a.line);
  if (it != index_.end()) {
    // Index points at the tail-most entry for this address.
    for (auto rit = vdb_.rbegin(); rit != vdb_.rend(); ++rit)
      if (rit->seq == it->second) return rit->data;
    assert(false && "index referenced a missing VDB entry");
  }
  return pm_.read(a);
}

void Controller::closeWrap(WrapId w, std::optional<uint32_t> durabilityToken) {
  std::lock_guard lk(mu_);
  if (!cot_.test(w)) throw SimError(Err::NotOpen, "close of a wrap that is not open");
  cot_.clear(w);

  if (durabilityToken) {
    // Snapshot after removing the closing wrap, so it never waits on itself.
    dwq_.push_back(DwqEntry{cot_, *durabilityToken});
    maxDwqDepth_ = std::max<uint64_t>(maxDwqDepth_, dwq_.size());
  }

  for (auto& e : vdb_) e.ds.clear(w);
  drainReadyHeads();

  for (auto& e : dwq_) e.ds.clear(w);
  while (!dwq_.empty() && dwq_.front().ds.empty()) {
    uint32_t token = dwq_.front().token;
    mailboxes_.at(token) = 1;
    if (hooks_) hooks_->onStrictSignal(token);
    dwq_.pop_front();
  }
  checkFifoInvariant();
}

void Controller::drainReadyHeads() {
  while (!vdb_.empty() && vdb_.front().ds.empty()) {
    const VdbEntry& e = vdb_.front();
    pm_.write(e.addr, e.data);
    if (hooks_) hooks_->onPmWrite(e.addr, e.data, PmWriteSource::VdbDrain, e.producerTx);
    auto it = index_.find(e.addr.line);
    if (it != index_.end() && it->second == e.seq) index_.erase(it);
    vdb_.pop_front();
  }
}

void Controller::checkFifoInvariant() const {
  // Dependency sets may only shrink toward the head: every member of an
  // earlier entry's set is still open, hence present in later tags. The log
  // range never enters the delay buffer.
  for (size_t i = 1; i < vdb_.size(); ++i)
    if (!vdb_[i - 1].ds.isSubsetOf(vdb_[i].ds))
      throw std::logic_error("VDB FIFO-emptiness order broken");
  for (size_t i = 1; i < dwq_.size(); ++i)
    if (!dwq_[i - 1].ds.isSubsetOf(dwq_[i].ds))
      throw std::logic_error("DWQ FIFO-emptiness order broken");
  if (!vdb_.empty() && pm_.layout().region(vdb_.back().addr) != Region::Home)
    throw std::logic_error("log-range address in the VDB");
}

void Controller::discardVolatile() {
  std::lock_guard lk(mu_);
  cot_ = DependencySet{};
  vdb_.clear();
  index_.clear();
  dwq_.clear();
  std::fill(mailboxes_.begin(), mailboxes_.end(), 0);
}

std::string Controller::dumpJson() const {
  std::lock_guard lk(mu_);
  nlohmann::json j;
  j["cot"] = cot_.bits(threads_);
  j["vdb"] = nlohmann::json::array();
  for (const auto& e : vdb_) {
    j["vdb"].push_back({{"addr", e.addr.line}, {"value", e.data.word}, {"ds", e.ds.bits(threads_)}});
  }
  j["dwq"] = nlohmann::json::array();
  for (const auto& e : dwq_)
    j["dwq"].push_back({{"ds", e.ds.bits(threads_)}, {"token", e.token}});
  return j.dump();
}

}  // namespace wrapsim
