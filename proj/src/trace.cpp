#include "wrapsim/trace.hpp"

#include <ostream>

#include "json.hpp"

namespace wrapsim {

const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::ThreadStep: return "step";
    case EventKind::Evict: return "evict";
    case EventKind::PmWrite: return "pm_write";
    case EventKind::VdbInsert: return "vdb_insert";
    case EventKind::WrapOpen: return "wrap_open";
    case EventKind::WrapClose: return "wrap_close";
    case EventKind::HtmCommit: return "htm_commit";
    case EventKind::HtmAbort: return "htm_abort";
    case EventKind::StrictSignal: return "strict_signal";
    case EventKind::SoftWaitDone: return "soft_wait_done";
    case EventKind::CleanupDone: return "cleanup_done";
    case EventKind::Crash: return "crash";
  }
  return "?";
}

void Trace::exportJsonLines(std::ostream& os) const {
  for (const Event& e : events) {
    nlohmann::json j;
    j["tick"] = e.tick;
    j["kind"] = to_string(e.kind);
    if (e.thread != Event::kNoThread) j["thread"] = e.thread;
    switch (e.kind) {
      case EventKind::Evict:
      case EventKind::VdbInsert:
        j["line"] = e.line;
        j["value"] = e.value;
        break;
      case EventKind::PmWrite:
        j["line"] = e.line;
        j["value"] = e.value;
        j["source"] = e.source == PmWriteSource::PassThrough ? "log"
                      : e.source == PmWriteSource::DirectHome ? "direct"
                                                              : "drain";
        if (e.producerTx >= 0) j["tx"] = e.producerTx;
        break;
      case EventKind::HtmCommit:
        j["tx"] = e.value;
        break;
      case EventKind::HtmAbort:
        j["reason"] = e.value;
        break;
      default:
        break;
    }
    os << j.dump() << "\n";
  }
}

}  // namespace wrapsim
