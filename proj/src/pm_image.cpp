#include "wrapsim/pm_image.hpp"

#include <istream>
#include <ostream>

namespace wrapsim {

namespace {

constexpr uint64_t kSnapshotMagic = 0x57524150534e4150ull;  // "WRAPSNAP"

void putU64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

uint64_t getU64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw SimError(Err::IoError, "truncated PmImage snapshot");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t{b[i]} << (8 * i);
  return v;
}

}  // namespace

uint32_t logChecksum(Timestamp start, Timestamp persist,
                     const std::vector<LogEntry>& entries) {
  // FNV-1a over the record words.
  uint32_t h = 2166136261u;
  auto mix = [&h](uint64_t w) {
    for (int i = 0; i < 8; ++i) {
      h ^= static_cast<uint32_t>((w >> (8 * i)) & 0xff);
      h *= 16777619u;
    }
  };
  mix(start.value);
  mix(persist.value);
  for (const auto& e : entries) {
    mix(e.addr.line);
    mix(e.value.word);
  }
  return h;
}

uint64_t packMarker(uint32_t entryCount, uint32_t checksum) {
  return (kLogMarkerMagic << 48) | (uint64_t{entryCount & 0xffff} << 32) | checksum;
}

void PmImage::save(std::ostream& os) const {
  putU64(os, kSnapshotMagic);
  putU64(os, layout_.homeLines);
  putU64(os, layout_.threads);
  putU64(os, layout_.writeSetCapacity);
  putU64(os, layout_.slotsPerWrap);
  putU64(os, lines_.size());
  for (uint64_t w : lines_) putU64(os, w);
  if (!os) throw SimError(Err::IoError, "failed to write PmImage snapshot");
}

PmImage PmImage::load(std::istream& is) {
  if (getU64(is) != kSnapshotMagic)
    throw SimError(Err::IoError, "not a PmImage snapshot");
  MemLayout layout;
  layout.homeLines = getU64(is);
  layout.threads = static_cast<uint32_t>(getU64(is));
  layout.writeSetCapacity = static_cast<uint32_t>(getU64(is));
  layout.slotsPerWrap = static_cast<uint32_t>(getU64(is));
  uint64_t n = getU64(is);
  if (n != layout.totalLines())
    throw SimError(Err::IoError, "snapshot line count does not match layout");
  PmImage img(layout);
  for (uint64_t i = 0; i < n; ++i) img.lines_[i] = getU64(is);
  return img;
}

std::optional<LogRecord> PmImage::parseSlot(WrapId w, uint32_t slot) const {
  uint64_t start = lines_.at(layout_.slotLine(w, slot, 0).line);
  if (start == 0) return std::nullopt;

  LogRecord rec;
  rec.owner = w;
  rec.slot = slot;
  rec.startTime = Timestamp{start};
  rec.persistTime = Timestamp{lines_.at(layout_.slotLine(w, slot, 1).line)};

  uint64_t marker = lines_.at(layout_.markerLine(w, slot).line);
  if ((marker >> 48) != kLogMarkerMagic) return rec;  // incomplete record

  uint32_t count = static_cast<uint32_t>((marker >> 32) & 0xffff);
  if (count > layout_.writeSetCapacity)
    throw SimError(Err::CorruptLog, "log marker entry count exceeds capacity");
  rec.writeSet.reserve(count);
  for (uint32_t k = 0; k < count; ++k) {
    rec.writeSet.push_back(
        LogEntry{Address{lines_.at(layout_.slotLine(w, slot, 2 + 2ull * k).line)},
                 CacheLineValue{lines_.at(layout_.slotLine(w, slot, 3 + 2ull * k).line)}});
  }
  if (static_cast<uint32_t>(marker & 0xffffffff) !=
      logChecksum(rec.startTime, rec.persistTime, rec.writeSet))
    throw SimError(Err::CorruptLog, "log marker checksum mismatch");
  if (!rec.persistTime.valid())
    throw SimError(Err::CorruptLog, "complete log record without persistTime");
  rec.endMarker = true;
  return rec;
}

std::vector<LogRecord> PmImage::scanLogs() const {
  std::vector<LogRecord> out;
  for (uint32_t w = 0; w < layout_.threads; ++w)
    for (uint32_t s = 0; s < layout_.slotsPerWrap; ++s)
      if (auto rec = parseSlot(WrapId{w}, s)) out.push_back(std::move(*rec));
  return out;
}

}  // namespace wrapsim
