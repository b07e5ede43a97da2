#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "wrapsim/controller.hpp"
#include "wrapsim/types.hpp"

namespace wrapsim {

class Engine;

struct CacheLine {
  CacheLineValue value;
  bool dirty = false;
  std::optional<WrapId> specOwner;  // speculatively written lines are pinned
  int32_t producerTx = -1;
  uint64_t lastUse = 0;
};

// Single shared last-level cache in front of the controller. Mutated only by
// the deterministic event loop.
class Cache {
 public:
  Cache(uint32_t capacity, const MemLayout& layout, Controller& ctrl)
      : capacity_(capacity), layout_(layout), ctrl_(ctrl) {}

  // Committed store: line becomes dirty and visible.
  void store(Engine& eng, Address a, CacheLineValue v, int32_t producerTx);
  CacheLineValue read(Engine& eng, Address a);
  bool contains(Address a) const { return lines_.count(a.line) != 0; }

  void markSpeculative(Address a, WrapId owner);
  void clearSpeculative(WrapId owner);

  // clwb stages a dirty line; sfence issues staged lines to the controller
  // in stage order, leaving clean copies resident.
  void clwb(Address a);
  void sfence(Engine& eng);
  bool stagePending() const { return !staged_.empty(); }

  // Scheduler-driven eviction of a dirty, non-speculative line.
  void evict(Engine& eng, Address a);

  std::vector<uint64_t> dirtyEvictableLines(bool homeOnly) const;
  std::vector<uint64_t> dirtyHomeLines() const;

  void discardVolatile();
  size_t size() const { return lines_.size(); }

 private:
  CacheLine& fill(Engine& eng, Address a);
  void makeRoom(Engine& eng);

  uint32_t capacity_;
  MemLayout layout_;
  Controller& ctrl_;
  std::map<uint64_t, CacheLine> lines_;  // ordered: deterministic iteration
  std::vector<uint64_t> staged_;
};

}  // namespace wrapsim
