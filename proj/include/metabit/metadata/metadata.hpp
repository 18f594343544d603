#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "metabit/common/frame_type.hpp"

namespace metabit {

// Block-grid dimensions for a frame: ceil(extent / block_size).
inline int grid_extent(int pixels, int block_size) { return (pixels + block_size - 1) / block_size; }

struct QPMap {
  int block_size = 16;
  int grid_w = 0;
  int grid_h = 0;
  std::vector<std::uint8_t> qp;  // row-major, grid_w * grid_h

  std::uint8_t at(int bx, int by) const { return qp[static_cast<std::size_t>(by) * grid_w + bx]; }
  std::uint8_t& at(int bx, int by) { return qp[static_cast<std::size_t>(by) * grid_w + bx]; }
  bool operator==(const QPMap&) const = default;
};

// Quarter-pel displacement. The destination block at grid cell (bx, by) was
// copied from (bx*bs + dx/4, by*bs + dy/4) in the previous frame.
struct MotionVector {
  std::int16_t dx = 0;
  std::int16_t dy = 0;
  bool operator==(const MotionVector&) const = default;
};

struct MVField {
  int block_size = 16;
  int grid_w = 0;
  int grid_h = 0;
  std::vector<MotionVector> mv;

  const MotionVector& at(int bx, int by) const { return mv[static_cast<std::size_t>(by) * grid_w + bx]; }
  MotionVector& at(int bx, int by) { return mv[static_cast<std::size_t>(by) * grid_w + bx]; }
  bool operator==(const MVField&) const = default;

  static MVField zeros(int width, int height, int block_size);
  static MVField uniform(int width, int height, int block_size, MotionVector v);
};

struct FrameMetadata {
  FrameType type = FrameType::kI;
  QPMap qp;
  std::optional<MVField> mv;  // present exactly for P frames
  bool operator==(const FrameMetadata&) const = default;
};

struct GopMetadata {
  int width = 0;
  int height = 0;
  int block_size = 16;
  std::vector<FrameMetadata> frames;  // decode order, frames[0] is I

  std::size_t size() const { return frames.size(); }
  bool operator==(const GopMetadata&) const = default;
};

class SidecarError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad magic, unknown version, unknown frame-type byte.
class SidecarFormatError : public SidecarError {
 public:
  using SidecarError::SidecarError;
};

// Structurally readable data that violates a metadata invariant.
class SidecarValidationError : public SidecarError {
 public:
  using SidecarError::SidecarError;
};

class SidecarTruncated : public SidecarError {
 public:
  SidecarTruncated(const std::string& what, std::uint64_t offset) : SidecarError(what), offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

QPMap qp_map_from_slice(int slice_qp, int width, int height, int block_size = 16);

// Throws SidecarValidationError naming the offending frame (and block, for
// QP values). `first_frame_index` offsets frame numbers in messages.
void validate(const GopMetadata& gop, std::size_t first_frame_index = 0);

// "MBMD" | u16 version | u16 block_size | u32 width | u32 height |
// u32 frame_count | per frame: u8 type, u8 qp[gw*gh], P only: (i16 dx, i16 dy)[gw*gh].
inline constexpr std::uint16_t kSidecarVersion = 1;
inline constexpr std::size_t kSidecarHeaderBytes = 20;

std::size_t write_sidecar(std::span<const GopMetadata> gops, std::ostream& os);
std::vector<GopMetadata> read_sidecar(std::istream& is);

std::size_t save_sidecar(const std::filesystem::path& path, std::span<const GopMetadata> gops);
std::vector<GopMetadata> load_sidecar(const std::filesystem::path& path);

}  // namespace metabit
