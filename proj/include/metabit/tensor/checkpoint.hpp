#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "metabit/tensor/tensor.hpp"

namespace metabit {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

// "MBWT" | u16 version | u32 count | per tensor: u16 name length, name,
// u8 rank, u32 extents[rank], f32 data. All little-endian. 64-bit tensors
// are narrowed to f32 on write.
inline constexpr std::uint16_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& os, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(std::istream& is);

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

}  // namespace metabit
