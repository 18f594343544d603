#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "metabit/bitstream/bit_reader.hpp"

namespace metabit::bitstream {

enum NalType : std::uint8_t {
  kNalSliceNonIdr = 1,
  kNalSliceIdr = 5,
  kNalSei = 6,
  kNalSps = 7,
  kNalPps = 8,
  kNalAud = 9,
};

struct NalUnit {
  std::uint8_t ref_idc = 0;
  std::uint8_t type = 0;
  std::vector<std::uint8_t> payload;  // RBSP after the header byte, 00 00 03 -> 00 00
  std::size_t offset = 0;             // of the header byte within the stream
  std::uint8_t start_code_size = 4;   // 3 or 4
  std::size_t trailing_zero_bytes = 0;
  bool truncated = false;
};

// Splits an Annex-B elementary stream into NAL units in stream order.
// Throws BitstreamError when a non-empty input contains no start code.
std::vector<NalUnit> split_annexb(std::span<const std::uint8_t> bytes);

// Removes emulation-prevention bytes.
std::vector<std::uint8_t> unescape_rbsp(std::span<const std::uint8_t> ebsp);

}  // namespace metabit::bitstream
