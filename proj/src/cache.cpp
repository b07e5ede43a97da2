#include "wrapsim/cache.hpp"

#include <algorithm>

#include "wrapsim/engine.hpp"

namespace wrapsim {

void Cache::store(Engine& eng, Address a, CacheLineValue v, int32_t producerTx) {
  auto it = lines_.find(a.line);
  if (it == lines_.end()) {
    makeRoom(eng);
    it = lines_.emplace(a.line, CacheLine{}).first;
  }
  it->second.value = v;
  it->second.dirty = true;
  it->second.producerTx = producerTx;
  it->second.lastUse = eng.clock();
}

CacheLineValue Cache::read(Engine& eng, Address a) {
  auto it = lines_.find(a.line);
  if (it != lines_.end()) {
    it->second.lastUse = eng.clock();
    return it->second.value;
  }
  CacheLineValue v = ctrl_.memoryRead(a);
  makeRoom(eng);
  lines_.emplace(a.line, CacheLine{v, false, std::nullopt, -1, eng.clock()});
  return v;
}

void Cache::markSpeculative(Address a, WrapId owner) {
  auto it = lines_.find(a.line);
  if (it != lines_.end()) it->second.specOwner = owner;
}

void Cache::clearSpeculative(WrapId owner) {
  for (auto& [line, cl] : lines_)
    if (cl.specOwner == owner) cl.specOwner.reset();
}

void Cache::clwb(Address a) {
  auto it = lines_.find(a.line);
  if (it == lines_.end() || !it->second.dirty) return;
  if (std::find(staged_.begin(), staged_.end(), a.line) == staged_.end())
    staged_.push_back(a.line);
}

void Cache::sfence(Engine& eng) {
  // Staged lines are issued to the controller in stage order; a crash can
  // truncate the sequence at line granularity.
  for (uint64_t line : staged_) {
    auto it = lines_.find(line);
    if (it == lines_.end() || !it->second.dirty) continue;
    ctrl_.memoryWrite(Address{line}, it->second.value, it->second.producerTx);
    it->second.dirty = false;
  }
  staged_.clear();
}

void Cache::evict(Engine& eng, Address a) {
  auto it = lines_.find(a.line);
  if (it == lines_.end() || !it->second.dirty || it->second.specOwner)
    throw std::logic_error("eviction of an ineligible line");
  eng.charge(1);
  eng.record(EventKind::Evict, Event::kNoThread, a.line, it->second.value.word);
  ctrl_.memoryWrite(a, it->second.value, it->second.producerTx);
  lines_.erase(it);
}

void Cache::makeRoom(Engine& eng) {
  while (lines_.size() >= capacity_) {
    auto victim = lines_.end();
    for (auto it = lines_.begin(); it != lines_.end(); ++it) {
      if (it->second.specOwner) continue;
      if (victim == lines_.end() || it->second.lastUse < victim->second.lastUse) victim = it;
    }
    if (victim == lines_.end())
      throw SimError(Err::HtmCapacityAbort, "cache full of speculative lines");
    if (victim->second.dirty) {
      eng.charge(1);
      ctrl_.memoryWrite(Address{victim->first}, victim->second.value,
                        victim->second.producerTx);
    }
    lines_.erase(victim);
  }
}

std::vector<uint64_t> Cache::dirtyEvictableLines(bool homeOnly) const {
  std::vector<uint64_t> out;
  for (const auto& [line, cl] : lines_) {
    if (!cl.dirty || cl.specOwner) continue;
    if (homeOnly && layout_.region(Address{line}) != Region::Home) continue;
    out.push_back(line);
  }
  return out;
}

std::vector<uint64_t> Cache::dirtyHomeLines() const {
  std::vector<uint64_t> out;
  for (const auto& [line, cl] : lines_)
    if (cl.dirty && !cl.specOwner && layout_.region(Address{line}) == Region::Home)
      out.push_back(line);
  return out;
}

void Cache::discardVolatile() {
  lines_.clear();
  staged_.clear();
}

}  // namespace wrapsim
