#include "metabit/bitstream/annexb.hpp"

#include <cstring>

namespace metabit::bitstream {

namespace {

constexpr std::size_t kNotFound = static_cast<std::size_t>(-1);

// Position of the next 00 00 01 at or after `from`.
std::size_t find_start_code(std::span<const std::uint8_t> b, std::size_t from) {
  const std::size_t n = b.size();
  std::size_t i = from + 2;
  while (i < n) {
    const void* hit = std::memchr(b.data() + i, 0x01, n - i);
    if (!hit) return kNotFound;
    i = static_cast<std::size_t>(static_cast<const std::uint8_t*>(hit) - b.data());
    if (b[i - 1] == 0 && b[i - 2] == 0) return i - 2;
    ++i;
  }
  return kNotFound;
}

}  // namespace

std::vector<std::uint8_t> unescape_rbsp(std::span<const std::uint8_t> ebsp) {
  std::vector<std::uint8_t> out;
  out.reserve(ebsp.size());
  int zeros = 0;
  for (std::uint8_t byte : ebsp) {
    if (zeros >= 2 && byte == 0x03) {
      zeros = 0;
      continue;
    }
    out.push_back(byte);
    zeros = byte == 0 ? zeros + 1 : 0;
  }
  return out;
}

std::vector<NalUnit> split_annexb(std::span<const std::uint8_t> bytes) {
  std::vector<NalUnit> units;
  if (bytes.empty()) return units;
  std::size_t sc = find_start_code(bytes, 0);
  if (sc == kNotFound) throw BitstreamError("not Annex-B: no start code found");

  std::uint8_t sc_size = (sc > 0 && bytes[sc - 1] == 0) ? 4 : 3;
  while (sc != kNotFound) {
    const std::size_t begin = sc + 3;
    const std::size_t next = find_start_code(bytes, begin);
    NalUnit unit;
    unit.offset = begin;
    unit.start_code_size = sc_size;
    std::size_t end = next == kNotFound ? bytes.size() : next;
    std::uint8_t next_size = 3;
    if (next != kNotFound) {
      // One zero before 00 00 01 belongs to a 4-byte start code; any further
      // zeros are trailing_zero_8bits of this unit.
      std::size_t zeros = 0;
      while (end > begin && bytes[end - 1] == 0) {
        --end;
        ++zeros;
      }
      if (zeros > 0) {
        next_size = 4;
        unit.trailing_zero_bytes = zeros - 1;
      }
      if (end == begin) {
        throw BitstreamError("empty NAL unit at byte offset " + std::to_string(begin));
      }
    } else if (end == begin || bytes[end - 1] == 0) {
      // A complete NAL unit ends with the rbsp stop bit (or an emulation
      // byte after cabac_zero_words), never with 0x00.
      unit.truncated = true;
    }

    if (end > begin) {
      const std::uint8_t header = bytes[begin];
      if (header & 0x80) {
        throw BitstreamError("forbidden_zero_bit set in NAL header at byte offset " +
                             std::to_string(begin));
      }
      unit.ref_idc = (header >> 5) & 0x3;
      unit.type = header & 0x1F;
      unit.payload = unescape_rbsp(bytes.subspan(begin + 1, end - begin - 1));
    }
    units.push_back(std::move(unit));
    sc = next;
    sc_size = next_size;
  }
  return units;
}

}  // namespace metabit::bitstream
