#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <vector>

#include "metabit/tensor/tensor.hpp"

namespace metabit {

class VideoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Planar 8-bit I420: Y is width*height, U and V are (width/2)*(height/2).
struct YuvFrame {
  std::vector<std::uint8_t> y, u, v;
  bool operator==(const YuvFrame&) const = default;
};

enum class PixelFormat { kYuv420, kRgbFloat };

struct VideoClip {
  int width = 0;
  int height = 0;
  PixelFormat format = PixelFormat::kYuv420;
  double frame_rate = 25.0;  // bookkeeping only
  std::vector<YuvFrame> yuv;  // kYuv420
  std::vector<Tensor> rgb;    // kRgbFloat: [3, H, W] in [0, 1]

  std::size_t frame_count() const { return format == PixelFormat::kYuv420 ? yuv.size() : rgb.size(); }
};

std::size_t yuv420_frame_bytes(int width, int height);

VideoClip read_yuv420(std::istream& is, int width, int height);
VideoClip read_yuv420(const std::filesystem::path& path, int width, int height);
void write_yuv420(std::ostream& os, const VideoClip& clip);
void write_yuv420(const std::filesystem::path& path, const VideoClip& clip);

enum class ColorRange { kLimited, kFull };

// BT.601. Chroma is upsampled and subsampled by nearest neighbour (the
// top-left sample of each 2x2 block). Outputs are clamped and rounded.
Tensor yuv_to_rgb(const YuvFrame& f, int width, int height, ColorRange range = ColorRange::kLimited);
YuvFrame rgb_to_yuv(const Tensor& rgb, ColorRange range = ColorRange::kLimited);
VideoClip to_rgb(const VideoClip& clip, ColorRange range = ColorRange::kLimited);
VideoClip to_yuv(const VideoClip& clip, ColorRange range = ColorRange::kLimited);

// Luma in [0, 1] from an RGB [3, H, W] frame: 0.299 R + 0.587 G + 0.114 B.
Tensor rgb_luma(const Tensor& rgb);

}  // namespace metabit
