#include "wrapsim/recovery.hpp"

#include <algorithm>

namespace wrapsim {

RecoveryReport recover(const PmImage& image) {
  RecoveryReport rep;
  rep.finalImage = image;

  std::vector<LogRecord> records = image.scanLogs();

  // Unordered records: started, but the persist timestamp never became
  // durable. No crash-time ordering is known for them, so any complete
  // record they might precede is unreplayable.
  uint64_t tMin = ~uint64_t{0};
  bool haveUnordered = false;
  for (const auto& r : records) {
    if (!r.persistTime.valid()) {
      haveUnordered = true;
      tMin = std::min(tMin, r.startTime.value);
    }
    if (r.endMarker) {
      rep.completeSet.push_back(r);
    } else {
      rep.incompleteSet.push_back(r);
    }
  }
  rep.tMinInfinite = !haveUnordered;
  rep.tMin = Timestamp{haveUnordered ? tMin : 0};

  // Walk records with durable persist timestamps in ascending order; replay
  // the longest prefix of complete records below tMin. An incomplete record
  // with a known persist timestamp ends the prefix: later records could
  // depend on it.
  std::vector<const LogRecord*> ordered;
  for (const auto& r : records)
    if (r.persistTime.valid()) ordered.push_back(&r);
  std::sort(ordered.begin(), ordered.end(), [](const LogRecord* a, const LogRecord* b) {
    return a->persistTime < b->persistTime;
  });

  for (const LogRecord* r : ordered) {
    if (haveUnordered && r->persistTime.value >= tMin) break;
    if (!r->endMarker) break;
    for (const auto& e : r->writeSet) rep.finalImage.write(e.addr, e.value);
    rep.replayed.push_back(ReplayedTx{r->owner, r->slot, r->startTime, r->persistTime});
  }
  return rep;
}

PmImage injectCrash(const MemLayout& layout, const Trace& trace, uint64_t tick) {
  PmImage img(layout);
  for (const Event& e : trace.events) {
    if (e.tick > tick) break;
    if (e.kind == EventKind::PmWrite) img.write(Address{e.line}, CacheLineValue{e.value});
  }
  return img;
}

std::vector<uint64_t> interestingCrashTicks(const Trace& trace) {
  std::vector<uint64_t> ticks;
  ticks.push_back(0);
  for (const Event& e : trace.events) {
    switch (e.kind) {
      case EventKind::PmWrite:
      case EventKind::HtmCommit:
      case EventKind::StrictSignal:
      case EventKind::SoftWaitDone:
      case EventKind::WrapClose:
      case EventKind::CleanupDone:
        ticks.push_back(e.tick);
        break;
      default:
        break;
    }
  }
  ticks.push_back(trace.finalTick);
  std::sort(ticks.begin(), ticks.end());
  ticks.erase(std::unique(ticks.begin(), ticks.end()), ticks.end());
  return ticks;
}

}  // namespace wrapsim
