#include "metabit/evalcli/video.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>

namespace metabit {

namespace {

void check_dims(int width, int height) {
  if (width <= 0 || height <= 0 || width % 2 != 0 || height % 2 != 0) {
    throw VideoError("YUV 4:2:0 needs positive even dimensions, got " + std::to_string(width) + "x" +
                     std::to_string(height));
  }
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

// Scale of Y and of centred chroma relative to unit-range signals.
struct Range {
  double y_off, y_scale, c_scale;
};
Range range_of(ColorRange r) { return r == ColorRange::kLimited ? Range{16, 219, 224} : Range{0, 255, 255}; }

constexpr double kr = 0.299, kg = 0.587, kb = 0.114;

}  // namespace

std::size_t yuv420_frame_bytes(int width, int height) {
  check_dims(width, height);
  return static_cast<std::size_t>(width) * height * 3 / 2;
}

VideoClip read_yuv420(std::istream& is, int width, int height) {
  const std::size_t frame = yuv420_frame_bytes(width, height);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() % frame != 0) {
    throw VideoError("YUV size " + std::to_string(bytes.size()) + " bytes is not a multiple of the " +
                     std::to_string(frame) + "-byte frame size for " + std::to_string(width) + "x" +
                     std::to_string(height) + " (expected " + std::to_string(bytes.size() / frame * frame) + " or " +
                     std::to_string((bytes.size() / frame + 1) * frame) + ")");
  }
  VideoClip clip;
  clip.width = width;
  clip.height = height;
  const std::size_t ny = static_cast<std::size_t>(width) * height, nc = ny / 4;
  for (std::size_t off = 0; off < bytes.size(); off += frame) {
    YuvFrame f;
    const auto* p = bytes.data() + off;
    f.y.assign(p, p + ny);
    f.u.assign(p + ny, p + ny + nc);
    f.v.assign(p + ny + nc, p + ny + 2 * nc);
    clip.yuv.push_back(std::move(f));
  }
  return clip;
}

VideoClip read_yuv420(const std::filesystem::path& path, int width, int height) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw VideoError("cannot open " + path.string());
  try {
    return read_yuv420(in, width, height);
  } catch (const VideoError& e) {
    throw VideoError(path.string() + ": " + e.what());
  }
}

void write_yuv420(std::ostream& os, const VideoClip& clip) {
  if (clip.format != PixelFormat::kYuv420) {
    write_yuv420(os, to_yuv(clip));
    return;
  }
  const std::size_t ny = static_cast<std::size_t>(clip.width) * clip.height;
  check_dims(clip.width, clip.height);
  for (const auto& f : clip.yuv) {
    if (f.y.size() != ny || f.u.size() != ny / 4 || f.v.size() != ny / 4) throw VideoError("YUV frame has wrong plane sizes");
    os.write(reinterpret_cast<const char*>(f.y.data()), static_cast<std::streamsize>(f.y.size()));
    os.write(reinterpret_cast<const char*>(f.u.data()), static_cast<std::streamsize>(f.u.size()));
    os.write(reinterpret_cast<const char*>(f.v.data()), static_cast<std::streamsize>(f.v.size()));
  }
}

void write_yuv420(const std::filesystem::path& path, const VideoClip& clip) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw VideoError("cannot write " + path.string());
  write_yuv420(out, clip);
  if (!out) throw VideoError("write failed: " + path.string());
}

Tensor yuv_to_rgb(const YuvFrame& f, int width, int height, ColorRange range) {
  check_dims(width, height);
  const Range r = range_of(range);
  Tensor out({3, height, width});
  auto d = out.data<float>();
  const std::size_t plane = static_cast<std::size_t>(width) * height;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t c = static_cast<std::size_t>(y / 2) * (width / 2) + x / 2;
      const double yy = (f.y[static_cast<std::size_t>(y) * width + x] - r.y_off) / r.y_scale;
      const double pb = (f.u[c] - 128.0) / r.c_scale, pr = (f.v[c] - 128.0) / r.c_scale;
      const double red = yy + 2 * (1 - kr) * pr;
      const double blue = yy + 2 * (1 - kb) * pb;
      const double green = (yy - kr * red - kb * blue) / kg;
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      d[i] = static_cast<float>(std::clamp(red, 0.0, 1.0));
      d[plane + i] = static_cast<float>(std::clamp(green, 0.0, 1.0));
      d[2 * plane + i] = static_cast<float>(std::clamp(blue, 0.0, 1.0));
    }
  }
  return out;
}

YuvFrame rgb_to_yuv(const Tensor& rgb, ColorRange range) {
  if (rgb.rank() != 3 || rgb.dim(0) != 3) throw VideoError("rgb_to_yuv expects [3,H,W], got " + to_string(rgb.shape()));
  const int height = static_cast<int>(rgb.dim(1)), width = static_cast<int>(rgb.dim(2));
  check_dims(width, height);
  const Range r = range_of(range);
  const Tensor t = rgb.to(DType::kFloat64);
  const auto d = t.data<double>();
  const std::size_t plane = static_cast<std::size_t>(width) * height;
  YuvFrame f;
  f.y.resize(plane);
  f.u.resize(plane / 4);
  f.v.resize(plane / 4);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      const double red = std::clamp(d[i], 0.0, 1.0), green = std::clamp(d[plane + i], 0.0, 1.0),
                   blue = std::clamp(d[2 * plane + i], 0.0, 1.0);
      const double yy = kr * red + kg * green + kb * blue;
      f.y[i] = to_byte(r.y_off + r.y_scale * yy);
      if (y % 2 == 0 && x % 2 == 0) {
        const std::size_t c = static_cast<std::size_t>(y / 2) * (width / 2) + x / 2;
        f.u[c] = to_byte(128.0 + r.c_scale * (blue - yy) / (2 * (1 - kb)));
        f.v[c] = to_byte(128.0 + r.c_scale * (red - yy) / (2 * (1 - kr)));
      }
    }
  }
  return f;
}

VideoClip to_rgb(const VideoClip& clip, ColorRange range) {
  if (clip.format == PixelFormat::kRgbFloat) return clip;
  VideoClip out{clip.width, clip.height, PixelFormat::kRgbFloat, clip.frame_rate, {}, {}};
  for (const auto& f : clip.yuv) out.rgb.push_back(yuv_to_rgb(f, clip.width, clip.height, range));
  return out;
}

VideoClip to_yuv(const VideoClip& clip, ColorRange range) {
  if (clip.format == PixelFormat::kYuv420) return clip;
  VideoClip out{clip.width, clip.height, PixelFormat::kYuv420, clip.frame_rate, {}, {}};
  for (const auto& f : clip.rgb) out.yuv.push_back(rgb_to_yuv(f, range));
  return out;
}

Tensor rgb_luma(const Tensor& rgb) {
  if (rgb.rank() != 3 || rgb.dim(0) != 3) throw ShapeError("rgb_luma expects [3,H,W], got " + to_string(rgb.shape()));
  const std::int64_t h = rgb.dim(1), w = rgb.dim(2), n = h * w;
  Tensor out({h, w}, DType::kFloat64);
  const Tensor t = rgb.to(DType::kFloat64);
  const auto d = t.data<double>();
  auto o = out.data<double>();
  for (std::int64_t i = 0; i < n; ++i) o[i] = kr * d[i] + kg * d[n + i] + kb * d[2 * n + i];
  return out;
}

}  // namespace metabit
