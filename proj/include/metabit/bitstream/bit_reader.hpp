#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

namespace metabit::bitstream {

class BitstreamError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BitUnderflow : public BitstreamError {
 public:
  using BitstreamError::BitstreamError;
};

// MSB-first reader over an RBSP (emulation prevention already removed).
class BitReader {
 public:
  explicit BitReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t read_bits(int n);
  bool read_flag() { return read_bits(1) != 0; }
  // Exp-Golomb ue(v) / se(v).
  std::uint32_t read_ue();
  std::int32_t read_se();
  void skip_bits(std::size_t n);

  std::size_t bits_left() const { return bytes_.size() * 8 - pos_; }
  std::size_t position() const { return pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace metabit::bitstream
