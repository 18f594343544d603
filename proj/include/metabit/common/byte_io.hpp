#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <type_traits>

namespace metabit::byte_io {

// Little-endian encoding independent of host byte order.
template <typename U>
void put_le(std::ostream& os, U value) {
  static_assert(std::is_unsigned_v<U>);
  char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  os.write(buf, sizeof(U));
}

inline void put_f32(std::ostream& os, float v) { put_le<std::uint32_t>(os, std::bit_cast<std::uint32_t>(v)); }

class TruncatedInput : public std::runtime_error {
 public:
  TruncatedInput(std::uint64_t offset, std::size_t wanted)
      : std::runtime_error("truncated input at byte offset " + std::to_string(offset) + " (needed " +
                           std::to_string(wanted) + " more bytes)"),
        offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

// Sequential reader that tracks its byte offset for error reporting.
class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}

  void read(void* dst, std::size_t n) {
    is_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) throw TruncatedInput(offset_, n);
    offset_ += n;
  }

  template <typename U>
  U le() {
    unsigned char buf[sizeof(U)];
    read(buf, sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(buf[i]) << (8 * i));
    return v;
  }

  float f32() { return std::bit_cast<float>(le<std::uint32_t>()); }
  std::uint64_t offset() const { return offset_; }

 private:
  std::istream& is_;
  std::uint64_t offset_ = 0;
};

}  // namespace metabit::byte_io
