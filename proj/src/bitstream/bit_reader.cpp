#include "metabit/bitstream/bit_reader.hpp"

namespace metabit::bitstream {

std::uint32_t BitReader::read_bits(int n) {
  if (n < 0 || n > 32) throw BitstreamError("read_bits: invalid width " + std::to_string(n));
  if (static_cast<std::size_t>(n) > bits_left()) {
    throw BitUnderflow("bit reader exhausted: wanted " + std::to_string(n) + " bits, " +
                       std::to_string(bits_left()) + " left");
  }
  std::uint32_t v = 0;
  for (int i = 0; i < n; ++i) {
    const std::uint8_t byte = bytes_[pos_ >> 3];
    v = (v << 1) | ((byte >> (7 - (pos_ & 7))) & 1u);
    ++pos_;
  }
  return v;
}

void BitReader::skip_bits(std::size_t n) {
  if (n > bits_left()) throw BitUnderflow("bit reader exhausted while skipping");
  pos_ += n;
}

std::uint32_t BitReader::read_ue() {
  int zeros = 0;
  while (!read_flag()) {
    if (++zeros > 31) throw BitstreamError("Exp-Golomb code longer than 32 bits");
  }
  if (zeros == 0) return 0;
  const std::uint64_t value = (std::uint64_t{1} << zeros) - 1 + read_bits(zeros);
  if (value > 0xFFFFFFFFull) throw BitstreamError("Exp-Golomb value overflows 32 bits");
  return static_cast<std::uint32_t>(value);
}

std::int32_t BitReader::read_se() {
  const std::uint32_t k = read_ue();
  const auto magnitude = static_cast<std::int64_t>((static_cast<std::uint64_t>(k) + 1) / 2);
  return static_cast<std::int32_t>((k & 1) ? magnitude : -magnitude);
}

}  // namespace metabit::bitstream
