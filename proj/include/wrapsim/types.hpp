#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace wrapsim {

// Upper bound on concurrently usable wrap identifiers. One machine word by
// default; DependencySet generalizes to multiple words if this is raised.
inline constexpr uint32_t kMaxWraps = 64;

// Logical tick issued by the simulation engine. Stands in for the platform
// timestamp counter: globally unique and strictly increasing. 0 means unset.
struct Timestamp {
  uint64_t value = 0;

  bool valid() const { return value != 0; }
  friend auto operator<=>(const Timestamp&, const Timestamp&) = default;
};

struct WrapId {
  uint32_t id = 0;

  friend auto operator<=>(const WrapId&, const WrapId&) = default;
};

// Fixed-width bit vector over wrap identifiers. Tags VDB/DWQ entries and
// realizes the controller's Current Open Transactions set.
class DependencySet {
 public:
  static constexpr uint32_t kWords = (kMaxWraps + 63) / 64;

  void set(WrapId w) { word(w) |= bit(w); }
  void clear(WrapId w) { word(w) &= ~bit(w); }
  bool test(WrapId w) const { return (words_[w.id / 64] & bit(w)) != 0; }

  bool empty() const {
    for (uint64_t x : words_)
      if (x != 0) return false;
    return true;
  }

  uint32_t count() const {
    uint32_t n = 0;
    for (uint64_t x : words_) n += static_cast<uint32_t>(__builtin_popcountll(x));
    return n;
  }

  bool isSubsetOf(const DependencySet& o) const {
    for (uint32_t i = 0; i < kWords; ++i)
      if ((words_[i] & ~o.words_[i]) != 0) return false;
    return true;
  }

  // Display form matching the paper's {1,1,1,0} vectors, width = n bits.
  std::vector<int> bits(uint32_t n) const {
    std::vector<int> out(n, 0);
    for (uint32_t i = 0; i < n; ++i)
      if (test(WrapId{i})) out[i] = 1;
    return out;
  }

  friend bool operator==(const DependencySet&, const DependencySet&) = default;

 private:
  static uint64_t bit(WrapId w) { return uint64_t{1} << (w.id % 64); }
  uint64_t& word(WrapId w) { return words_[w.id / 64]; }

  std::array<uint64_t, kWords> words_{};
};

inline DependencySet depset_remove(DependencySet ds, WrapId w) {
  ds.clear(w);
  return ds;
}

inline bool depset_is_empty(const DependencySet& ds) { return ds.empty(); }

enum class Region { Home, Log };

// Cache-line index into the simulated physical space. Whether a line is in
// the HOME or the reserved LOG range is derived from the memory layout.
struct Address {
  uint64_t line = 0;

  friend auto operator<=>(const Address&, const Address&) = default;
};

// The simulation stores one 64-bit word per cache line; line granularity is
// the unit of eviction and write-back. Equality is bitwise.
struct CacheLineValue {
  uint64_t word = 0;

  friend bool operator==(const CacheLineValue&, const CacheLineValue&) = default;
};

struct LogEntry {
  Address addr;
  CacheLineValue value;

  friend bool operator==(const LogEntry&, const LogEntry&) = default;
};

// Parsed form of one persistent per-transaction log record.
struct LogRecord {
  WrapId owner;
  uint32_t slot = 0;  // slot index within the owner's log ring
  Timestamp startTime;
  Timestamp persistTime;
  std::vector<LogEntry> writeSet;
  bool endMarker = false;
};

enum class Err {
  ConfigError,
  DuplicateOpen,
  NotOpen,
  ProtocolViolation,
  HtmCapacityAbort,
  OutOfRange,
  CorruptLog,
  ScaleLimit,
  IoError,
};

class SimError : public std::runtime_error {
 public:
  SimError(Err code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Err code() const { return code_; }

 private:
  Err code_;
};

// Control-flow exception unwinding an HTM section back to its retry point.
struct HtmAbort {
  enum class Reason { Conflict, Capacity, LockHeld, LogOverflow };
  Reason reason = Reason::Conflict;
};

}  // namespace wrapsim
