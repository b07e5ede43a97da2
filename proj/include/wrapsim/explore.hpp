#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "wrapsim/checker.hpp"
#include "wrapsim/config.hpp"

namespace wrapsim {

// Randomized schedule exploration over small mixed workloads: random
// write/read/increment transactions with mixed durability modes, random
// eviction pressure, both conflict policies, occasional forced log cleanup.
// Every run is checked at every interesting crash tick, plus the lemma and
// serializability predicates.
struct SuiteOptions {
  uint64_t seedBase = 1;
  uint64_t targetSamples = 10000;  // (schedule x crash tick) pairs
  uint32_t maxThreads = 4;
  uint32_t maxWraps = 8;
  uint32_t maxWritesPerWrap = 6;
  Mutations mutations;
  uint32_t maxRuns = 1u << 20;
};

struct SuiteResult {
  uint64_t runs = 0;
  uint64_t samples = 0;  // crash points checked
  uint64_t violations = 0;
  uint64_t strictSignals = 0;
  uint64_t aborts = 0;
  uint64_t maxVdbDepthSeen = 0;
  bool vdbBoundHeld = true;   // maxVdbDepth <= writes-bound x wraps opened
  std::string firstViolation;
};

SuiteResult runRandomSuite(const SuiteOptions& opt);

// Exhaustive bounded DFS over scheduler choices for two wraps with a couple
// of writes each (coarse dispatch granularity, capped eviction count), every
// leaf checked at every crash point.
struct DfsOptions {
  uint32_t writesPerWrap = 2;  // <= 2
  uint64_t maxEvictions = 2;
  uint64_t maxLeaves = 1u << 22;
  bool sharedLine = true;  // overlapping write sets
};

struct DfsResult {
  uint64_t leaves = 0;
  uint64_t samples = 0;
  uint64_t violations = 0;
  std::string firstViolation;
};

DfsResult runExhaustive(const DfsOptions& opt);

}  // namespace wrapsim
