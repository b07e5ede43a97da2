#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "wrapsim/engine.hpp"
#include "wrapsim/task.hpp"
#include "wrapsim/trace.hpp"
#include "wrapsim/wrap.hpp"

namespace wrapsim {

enum class WorkloadKind { Hashtable, CounterVector, Rbtree, Scripted };
enum class Method { Wrap, WrapStrict, HtmOnly, PtlEager };

const char* to_string(WorkloadKind k);
const char* to_string(Method m);

struct WorkloadSpec {
  WorkloadKind kind = WorkloadKind::Hashtable;
  uint32_t threads = 1;
  uint64_t txCount = 100;     // total across threads
  uint32_t writesPerTx = 10;
  double readWriteRatio = 1.0;  // fraction of accesses that are writes
  uint64_t tableLines = 1 << 12;
  uint64_t rbInitial = 1024;  // seeded elements for the tree workload
  uint64_t seed = 1;
  bool randomValues = false;  // unique random values instead of keyed ones
};

struct RunMetrics {
  uint64_t simTicks = 0;
  uint64_t committedTx = 0;
  uint64_t aborts = 0;
  uint64_t maxVdbDepth = 0;
  uint64_t maxDwqDepth = 0;
  uint64_t reads = 0;
  uint64_t writes = 0;
  uint64_t cleanups = 0;
  uint64_t latencySum = 0;
  std::vector<uint64_t> latencyHistogram = std::vector<uint64_t>(32, 0);  // log2 buckets

  double meanLatency() const { return committedTx ? double(latencySum) / double(committedTx) : 0.0; }
};

struct RunArtifacts {
  Trace trace;
  MemLayout layout;
  std::vector<uint64_t> finalHome;  // post-drain logical state
};

// Abstract per-transaction read/write surface; each method supplies its own
// implementation so a workload body runs unchanged under every method.
struct TxOps {
  virtual ~TxOps() = default;
  virtual Co<void> store(uint64_t line, uint64_t value) = 0;
  virtual Co<CacheLineValue> read(uint64_t line) = 0;
};
using TxBody = std::function<Co<void>(TxOps&)>;

RunMetrics runWorkload(const WorkloadSpec& spec, const ScheduleConfig& sched, Method method,
                       const SimConfig* base = nullptr, RunArtifacts* artifacts = nullptr);

void emitCsvHeader(std::ostream& os);
void emitCsvRow(std::ostream& os, const WorkloadSpec& spec, Method method,
                const SimConfig& cfg, const ScheduleConfig& sched, const RunMetrics& m);

// PTL-Eager recovery: applies the undo logs of uncommitted transactions.
PmImage ptlRecover(const PmImage& image);

// Red-black tree inspection over a home snapshot (workload verification).
std::vector<uint64_t> rbtreeKeys(const std::vector<uint64_t>& home, uint64_t metaLine);
bool rbtreeValid(const std::vector<uint64_t>& home, uint64_t metaLine, std::string* why = nullptr);

}  // namespace wrapsim
