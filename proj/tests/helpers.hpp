#pragma once

#include <algorithm>
#include <functional>

#include "wrapsim/engine.hpp"
#include "wrapsim/wrap.hpp"

namespace wrapsim::testing {

inline SimConfig smallCfg(uint32_t threads, uint64_t homeLines = 16) {
  SimConfig cfg;
  cfg.threads = threads;
  cfg.homeLines = homeLines;
  cfg.writeSetCapacity = 8;
  cfg.logSlotsPerWrap = 4;
  cfg.cacheCapacity = 256;
  return cfg;
}

inline ScheduleConfig seeded(uint64_t seed) {
  ScheduleConfig s;
  s.seed = seed;
  return s;
}

// Runs thread t until it blocks, sleeps, or finishes.
inline void pump(Engine& eng, uint32_t t) {
  for (;;) {
    ActionMenu m = eng.menu();
    if (std::find(m.runnable.begin(), m.runnable.end(), t) == m.runnable.end()) break;
    eng.directThreadStep(t);
  }
}

inline void pumpAll(Engine& eng) {
  while (!eng.finished()) {
    ActionMenu m = eng.menu();
    if (m.runnable.empty()) break;
    eng.directThreadStep(m.runnable.front());
  }
}

// Phase gate for scripted interleavings.
struct Gate {
  std::vector<int> level;
  explicit Gate(uint32_t threads) : level(threads, 0) {}
  auto wait(Engine& eng, uint32_t t, int phase) {
    return eng.waitUntil(t, [this, t, phase] { return level[t] >= phase; });
  }
  void openAndPump(Engine& eng, uint32_t t) {
    level[t] += 1;
    pump(eng, t);
  }
};

}  // namespace wrapsim::testing
