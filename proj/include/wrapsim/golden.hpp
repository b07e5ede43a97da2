#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wrapsim/checker.hpp"
#include "wrapsim/config.hpp"
#include "wrapsim/trace.hpp"

namespace wrapsim {

// Scripted replay of the paper's four-transaction controller walkthrough.
// Twelve labeled steps; after each one the controller state is captured and
// the run can be crashed for the recovery table.
struct GoldenFig3Result {
  std::string actualJson;    // [{step, cot, vdb, drained, dwq}...]
  std::string expectedJson;  // transcribed controller table
  bool controllerMatch = false;

  std::vector<std::vector<uint32_t>> actualReplay;    // wrap ids per crash step
  std::vector<std::vector<uint32_t>> expectedReplay;  // transcribed recovery table
  bool recoveryMatch = false;

  Trace trace;
  MemLayout layout;
  std::vector<uint64_t> stepTicks;  // clock after each step
};

GoldenFig3Result runGoldenFig3(bool t2Strict = false);

// The three dependent increment transactions used for the persistence
// ordering scenario; home lines 0..3 hold w, x, y, z.
struct AbcRun {
  Trace trace;
  MemLayout layout;
  std::vector<uint32_t> commitThreads;  // thread ids in commit order
};

AbcRun runAbc(uint64_t seed, double evictionRate = 0.3, bool sequential = false);

// Expected state set for the serialization A, B, C.
std::vector<HomeImage> abcCanonicalStates();

}  // namespace wrapsim
