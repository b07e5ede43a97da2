#include <random>

#include "doctest.h"
#include "wrapsim/config.hpp"
#include "wrapsim/types.hpp"

using namespace wrapsim;

namespace {

DependencySet fromBits(std::initializer_list<int> bits) {
  DependencySet ds;
  uint32_t i = 0;
  for (int b : bits) {
    if (b) ds.set(WrapId{i});
    ++i;
  }
  return ds;
}

}  // namespace

TEST_CASE("depset_remove clears exactly one bit") {
  // {1,1,1,0} minus wrap 2 -> {1,1,0,0}
  CHECK(depset_remove(fromBits({1, 1, 1, 0}), WrapId{2}) == fromBits({1, 1, 0, 0}));
  // removing from the empty set is a no-op
  CHECK(depset_remove(fromBits({0, 0, 0, 0}), WrapId{0}) == fromBits({0, 0, 0, 0}));
  // {1,0,0,1} minus wrap 3 -> {1,0,0,0}
  CHECK(depset_remove(fromBits({1, 0, 0, 1}), WrapId{3}) == fromBits({1, 0, 0, 0}));
}

TEST_CASE("depset_is_empty") {
  CHECK(depset_is_empty(fromBits({0, 0, 0, 0})));
  CHECK(!depset_is_empty(fromBits({1, 0, 0, 0})));
  CHECK(!depset_is_empty(fromBits({0, 0, 0, 1})));
}

TEST_CASE("bit algebra: removing all set bits empties the set") {
  std::mt19937_64 rng(42);
  for (int iter = 0; iter < 200; ++iter) {
    DependencySet ds;
    std::vector<uint32_t> set;
    for (uint32_t w = 0; w < kMaxWraps; ++w) {
      if (rng() & 1) {
        ds.set(WrapId{w});
        set.push_back(w);
      }
    }
    CHECK(ds.count() == set.size());
    for (uint32_t w : set) ds = depset_remove(ds, WrapId{w});
    CHECK(depset_is_empty(ds));
  }
}

TEST_CASE("subset test is word-wise") {
  DependencySet a = fromBits({1, 0, 1, 0});
  DependencySet b = fromBits({1, 1, 1, 0});
  CHECK(a.isSubsetOf(b));
  CHECK(!b.isSubsetOf(a));
  CHECK(a.isSubsetOf(a));
}

TEST_CASE("bits display width") {
  DependencySet ds = fromBits({1, 0, 0, 1});
  CHECK(ds.bits(4) == std::vector<int>{1, 0, 0, 1});
}

TEST_CASE("memory layout regions are disjoint and derived from the line") {
  SimConfig cfg;
  cfg.threads = 2;
  cfg.homeLines = 100;
  cfg.writeSetCapacity = 4;
  cfg.logSlotsPerWrap = 3;
  MemLayout L = MemLayout::from(cfg);
  CHECK(L.region(Address{0}) == Region::Home);
  CHECK(L.region(Address{99}) == Region::Home);
  CHECK(L.region(Address{100}) == Region::Log);
  CHECK(L.slotLine(WrapId{0}, 0, 0).line == 100);
  CHECK(L.slotLines() == 3 + 2 * 4);
  CHECK(L.markerLine(WrapId{0}, 0).line == 100 + L.slotLines() - 1);
  CHECK(L.slotLine(WrapId{1}, 0, 0).line == 100 + 3 * L.slotLines());
  CHECK(L.ptlBase() == 100 + 2 * 3 * L.slotLines());
}

TEST_CASE("config rejects more threads than wrap ids") {
  SimConfig cfg;
  cfg.threads = kMaxWraps + 1;
  CHECK_THROWS_AS(cfg.validate(), SimError);
}
