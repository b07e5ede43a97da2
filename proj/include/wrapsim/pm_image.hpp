#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "wrapsim/config.hpp"
#include "wrapsim/types.hpp"

namespace wrapsim {

// The simulated persistent memory: home-location lines plus the reserved log
// range. Everything here survives a crash; cache and controller state do not.
class PmImage {
 public:
  PmImage() = default;
  explicit PmImage(const MemLayout& layout)
      : layout_(layout), lines_(layout.totalLines(), 0) {}

  const MemLayout& layout() const { return layout_; }

  CacheLineValue read(Address a) const { return CacheLineValue{lines_.at(a.line)}; }
  void write(Address a, CacheLineValue v) { lines_.at(a.line) = v.word; }

  std::vector<uint64_t> homeSnapshot() const {
    return {lines_.begin(), lines_.begin() + static_cast<long>(layout_.homeLines)};
  }

  friend bool operator==(const PmImage&, const PmImage&) = default;

  // Flat little-endian binary dump: header, layout, then the line array.
  void save(std::ostream& os) const;
  static PmImage load(std::istream& is);

  // Parses the log record in (wrap, slot). Returns nothing for a slot with no
  // startTime. endMarker is true only for a structurally valid marker line;
  // a valid-magic marker with a checksum mismatch throws Err::CorruptLog.
  std::optional<LogRecord> parseSlot(WrapId w, uint32_t slot) const;
  std::vector<LogRecord> scanLogs() const;

 private:
  MemLayout layout_;
  std::vector<uint64_t> lines_;
};

// Checksum sealing a log record against torn multi-line writes.
uint32_t logChecksum(Timestamp start, Timestamp persist,
                     const std::vector<LogEntry>& entries);
uint64_t packMarker(uint32_t entryCount, uint32_t checksum);

}  // namespace wrapsim
