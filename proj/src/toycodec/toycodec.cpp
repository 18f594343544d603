#include "metabit/toycodec/toycodec.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "metabit/warp/warp.hpp"

namespace metabit {

namespace {

// c[k][n] = a(k) cos((2n+1) k pi / 16), orthonormal.
const std::array<std::array<double, 8>, 8>& dct_basis() {
  static const auto basis = [] {
    std::array<std::array<double, 8>, 8> b{};
    for (int k = 0; k < 8; ++k) {
      const double a = k == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int n = 0; n < 8; ++n) b[k][n] = a * std::cos((2 * n + 1) * k * std::numbers::pi / 16.0);
    }
    return b;
  }();
  return basis;
}

std::int32_t round_half_away(double v) {
  return static_cast<std::int32_t>(v >= 0 ? std::floor(v + 0.5) : -std::floor(-v + 0.5));
}

void check_qp(int qp) {
  if (qp < 0 || qp > 51) throw std::invalid_argument("QP " + std::to_string(qp) + " outside [0,51]");
}

std::pair<int, int> plane_hw(const Tensor& p) {
  if (p.rank() != 2) throw ShapeError("toy codec planes are [H, W], got " + to_string(p.shape()));
  return {static_cast<int>(p.dim(0)), static_cast<int>(p.dim(1))};
}

int tiles(int extent) { return (extent + 7) / 8; }

// QP map for frame `index` of the GOP being coded.
QPMap frame_qp_map(const ToyCodecConfig& cfg, std::size_t index, int width, int height) {
  if (!cfg.block_qp.empty()) {
    const QPMap& q = cfg.block_qp.at(index);
    if (q.block_size != cfg.block_size || q.grid_w != grid_extent(width, cfg.block_size) ||
        q.grid_h != grid_extent(height, cfg.block_size)) {
      throw ShapeError("per-block QP map for frame " + std::to_string(index) + " does not match the frame grid");
    }
    return q;
  }
  const int qp = cfg.frame_qp.size() == 1 ? cfg.frame_qp[0] : cfg.frame_qp.at(index);
  check_qp(qp);
  return qp_map_from_slice(qp, width, height, cfg.block_size);
}

int tile_qp(const QPMap& qp, int tx, int ty, int scale) {
  const int bx = std::min(tx * 8 * scale / qp.block_size, qp.grid_w - 1);
  const int by = std::min(ty * 8 * scale / qp.block_size, qp.grid_h - 1);
  return qp.at(bx, by);
}

// Quantizes `residual` tile by tile (edge tiles replicate the border) and
// returns the levels; adds the bit cost to `bits`.
std::vector<std::int32_t> code_plane(const Tensor& residual, const QPMap& qp, int scale, double& bits) {
  const auto [h, w] = plane_hw(residual);
  const auto r = residual.data<float>();
  std::vector<std::int32_t> levels;
  levels.reserve(static_cast<std::size_t>(tiles(h)) * tiles(w) * 64);
  for (int ty = 0; ty < tiles(h); ++ty) {
    for (int tx = 0; tx < tiles(w); ++tx) {
      Block8 b;
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
          const int sy = std::min(ty * 8 + y, h - 1), sx = std::min(tx * 8 + x, w - 1);
          b[y * 8 + x] = r[static_cast<std::size_t>(sy) * w + sx];
        }
      const auto q = quantize_block(b, tile_qp(qp, tx, ty, scale));
      for (auto l : q) bits += std::log2(1.0 + std::abs(static_cast<double>(l)));
      levels.insert(levels.end(), q.begin(), q.end());
    }
  }
  return levels;
}

Tensor add_planes(const Tensor& a, const Tensor& b) {
  Tensor out(a.shape(), DType::kFloat32);
  const auto x = a.data<float>(), y = b.data<float>();
  auto o = out.data<float>();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  return out;
}

Tensor sub_planes(const Tensor& a, const Tensor& b) {
  Tensor out(a.shape(), DType::kFloat32);
  const auto x = a.data<float>(), y = b.data<float>();
  auto o = out.data<float>();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
  return out;
}

void check_frames(std::span<const Planes> frames) {
  const auto& first = frames.front();
  if (first.empty()) throw ShapeError("toy codec frame has no planes");
  for (const auto& f : frames) {
    if (f.size() != first.size()) throw ShapeError("toy codec frames differ in plane count");
    for (std::size_t p = 0; p < f.size(); ++p) {
      if (f[p].shape() != first[p].shape()) throw ShapeError("toy codec frames differ in plane size");
      if (f[p].dtype() != DType::kFloat32) throw ShapeError("toy codec planes must be float32");
    }
    for (std::size_t p = 0; p < f.size(); ++p) plane_scale(f[0], f[p]);
  }
}

}  // namespace

double quant_step(int qp) {
  check_qp(qp);
  return std::exp2((qp - 4) / 6.0);
}

Block8 dct8x8(const Block8& block) {
  const auto& c = dct_basis();
  Block8 tmp{}, out{};
  for (int y = 0; y < 8; ++y)
    for (int k = 0; k < 8; ++k) {
      double s = 0;
      for (int n = 0; n < 8; ++n) s += c[k][n] * block[y * 8 + n];
      tmp[y * 8 + k] = s;
    }
  for (int k = 0; k < 8; ++k)
    for (int x = 0; x < 8; ++x) {
      double s = 0;
      for (int n = 0; n < 8; ++n) s += c[k][n] * tmp[n * 8 + x];
      out[k * 8 + x] = s;
    }
  return out;
}

Block8 idct8x8(const Block8& coeffs) {
  const auto& c = dct_basis();
  Block8 tmp{}, out{};
  for (int n = 0; n < 8; ++n)
    for (int x = 0; x < 8; ++x) {
      double s = 0;
      for (int k = 0; k < 8; ++k) s += c[k][n] * coeffs[k * 8 + x];
      tmp[n * 8 + x] = s;
    }
  for (int y = 0; y < 8; ++y)
    for (int n = 0; n < 8; ++n) {
      double s = 0;
      for (int k = 0; k < 8; ++k) s += c[k][n] * tmp[y * 8 + k];
      out[y * 8 + n] = s;
    }
  return out;
}

Levels8 quantize_block(const Block8& residual, int qp) {
  const double step = quant_step(qp);
  const Block8 coeffs = dct8x8(residual);
  Levels8 levels;
  for (int i = 0; i < 64; ++i) levels[i] = round_half_away(coeffs[i] / step);
  return levels;
}

Block8 dequantize_block(const Levels8& levels, int qp) {
  const double step = quant_step(qp);
  Block8 coeffs;
  for (int i = 0; i < 64; ++i) coeffs[i] = levels[i] * step;
  return idct8x8(coeffs);
}

MotionSearchResult motion_search(const Tensor& cur, const Tensor& ref, int x0, int y0, int bw, int bh,
                                 int radius) {
  const auto [h, w] = plane_hw(cur);
  if (ref.shape() != cur.shape()) throw ShapeError("motion_search: frame sizes differ");
  if (x0 < 0 || y0 < 0 || bw <= 0 || bh <= 0 || x0 + bw > w || y0 + bh > h) {
    throw ShapeError("motion_search: block outside the frame");
  }
  const auto c = cur.data<float>(), r = ref.data<float>();
  MotionSearchResult best{0, 0, std::numeric_limits<double>::infinity()};
  auto better = [](const MotionSearchResult& a, const MotionSearchResult& b) {
    if (a.sad != b.sad) return a.sad < b.sad;
    const int ma = std::abs(a.dx) + std::abs(a.dy), mb = std::abs(b.dx) + std::abs(b.dy);
    if (ma != mb) return ma < mb;
    if (a.dy != b.dy) return a.dy < b.dy;
    return a.dx < b.dx;
  };
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      double sad = 0;
      for (int y = y0; y < y0 + bh; ++y) {
        const int sy = std::clamp(y + dy, 0, h - 1);
        for (int x = x0; x < x0 + bw; ++x) {
          const int sx = std::clamp(x + dx, 0, w - 1);
          sad += std::abs(static_cast<double>(c[static_cast<std::size_t>(y) * w + x]) -
                          r[static_cast<std::size_t>(sy) * w + sx]);
        }
      }
      const MotionSearchResult cand{dx, dy, sad};
      if (better(cand, best)) best = cand;
    }
  }
  return best;
}

int plane_scale(const Tensor& luma, const Tensor& plane) {
  const auto [lh, lw] = plane_hw(luma);
  const auto [ph, pw] = plane_hw(plane);
  if (ph == lh && pw == lw) return 1;
  if (ph == (lh + 1) / 2 && pw == (lw + 1) / 2) return 2;
  throw ShapeError("plane " + to_string(plane.shape()) + " is neither full size nor 4:2:0 of luma " +
                   to_string(luma.shape()));
}

MVField plane_motion(const MVField& luma, int scale) {
  if (scale == 1) return luma;
  MVField m = luma;
  m.block_size = luma.block_size / scale;
  for (auto& v : m.mv) {
    v.dx = static_cast<std::int16_t>(v.dx / scale);
    v.dy = static_cast<std::int16_t>(v.dy / scale);
  }
  return m;
}

Tensor dequantized_residual(std::span<const std::int32_t> levels, int height, int width, const QPMap& qp,
                            int scale) {
  const std::size_t expected = static_cast<std::size_t>(tiles(height)) * tiles(width) * 64;
  if (levels.size() != expected) {
    throw ShapeError("plane levels: expected " + std::to_string(expected) + " values, got " +
                     std::to_string(levels.size()));
  }
  Tensor out({height, width}, DType::kFloat32);
  auto o = out.data<float>();
  std::size_t at = 0;
  for (int ty = 0; ty < tiles(height); ++ty) {
    for (int tx = 0; tx < tiles(width); ++tx, at += 64) {
      Levels8 l;
      std::copy_n(levels.begin() + static_cast<std::ptrdiff_t>(at), 64, l.begin());
      const Block8 b = dequantize_block(l, tile_qp(qp, tx, ty, scale));
      for (int y = 0; y < 8 && ty * 8 + y < height; ++y)
        for (int x = 0; x < 8 && tx * 8 + x < width; ++x)
          o[static_cast<std::size_t>(ty * 8 + y) * width + tx * 8 + x] = static_cast<float>(b[y * 8 + x]);
    }
  }
  return out;
}

EncodedGop encode_gop(std::span<const Planes> frames, const ToyCodecConfig& cfg) {
  if (cfg.gop_size < 1 || cfg.search_radius < 0 || cfg.block_size < 8 || cfg.block_size % 8 != 0) {
    throw std::invalid_argument("invalid toy codec config");
  }
  if (frames.size() != static_cast<std::size_t>(cfg.gop_size)) {
    throw std::invalid_argument("encode_gop: got " + std::to_string(frames.size()) + " frames for gop_size " +
                                std::to_string(cfg.gop_size));
  }
  if (cfg.frame_qp.size() != 1 && cfg.frame_qp.size() != frames.size() && cfg.block_qp.empty()) {
    throw std::invalid_argument("frame_qp needs 1 or gop_size entries");
  }
  check_frames(frames);
  const auto [h, w] = plane_hw(frames[0][0]);
  const int bs = cfg.block_size;

  EncodedGop out;
  out.meta = {w, h, bs, {}};
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const Planes& cur = frames[f];
    FrameMetadata fm;
    fm.type = f == 0 ? FrameType::kI : FrameType::kP;
    fm.qp = frame_qp_map(cfg, f, w, h);
    Planes pred;
    if (f == 0) {
      for (const auto& p : cur) pred.push_back(Tensor::zeros(p.shape(), DType::kFloat32));
    } else {
      const Planes& ref = out.recon.back();
      MVField mv = MVField::zeros(w, h, bs);
      for (int by = 0; by < mv.grid_h; ++by)
        for (int bx = 0; bx < mv.grid_w; ++bx) {
          const int x0 = bx * bs, y0 = by * bs;
          const auto r = motion_search(cur[0], ref[0], x0, y0, std::min(bs, w - x0), std::min(bs, h - y0),
                                       cfg.search_radius);
          mv.at(bx, by) = {static_cast<std::int16_t>(4 * r.dx), static_cast<std::int16_t>(4 * r.dy)};
          out.bit_estimate += 10.0;
        }
      for (std::size_t p = 0; p < cur.size(); ++p) {
        pred.push_back(forward_warp(ref[p], plane_motion(mv, plane_scale(cur[0], cur[p]))));
      }
      fm.mv = std::move(mv);
    }
    EncodedFrame coded;
    Planes recon;
    for (std::size_t p = 0; p < cur.size(); ++p) {
      const int scale = plane_scale(cur[0], cur[p]);
      const auto [ph, pw] = plane_hw(cur[p]);
      coded.levels.push_back(code_plane(sub_planes(cur[p], pred[p]), fm.qp, scale, out.bit_estimate));
      recon.push_back(add_planes(pred[p], dequantized_residual(coded.levels.back(), ph, pw, fm.qp, scale)));
    }
    out.meta.frames.push_back(std::move(fm));
    out.coded.push_back(std::move(coded));
    out.recon.push_back(std::move(recon));
  }
  validate(out.meta);
  return out;
}

std::vector<Planes> decode_gop(const std::vector<EncodedFrame>& coded, const GopMetadata& meta,
                               const std::vector<std::pair<int, int>>& plane_dims) {
  validate(meta);
  if (coded.size() != meta.frames.size()) throw ShapeError("decode_gop: frame count mismatch");
  std::vector<Planes> recon;
  for (std::size_t f = 0; f < coded.size(); ++f) {
    if (coded[f].levels.size() != plane_dims.size()) throw ShapeError("decode_gop: plane count mismatch");
    Planes planes;
    for (std::size_t p = 0; p < plane_dims.size(); ++p) {
      const auto [ph, pw] = plane_dims[p];
      const int scale = (ph == meta.height && pw == meta.width) ? 1 : 2;
      Tensor residual = dequantized_residual(coded[f].levels[p], ph, pw, meta.frames[f].qp, scale);
      if (f == 0) {
        Tensor zero = Tensor::zeros({ph, pw}, DType::kFloat32);
        planes.push_back(add_planes(zero, residual));
      } else {
        const Tensor pred = forward_warp(recon.back()[p], plane_motion(*meta.frames[f].mv, scale));
        planes.push_back(add_planes(pred, residual));
      }
    }
    recon.push_back(std::move(planes));
  }
  return recon;
}

std::vector<EncodedGop> encode_sequence(std::span<const Planes> frames, const ToyCodecConfig& cfg) {
  std::vector<EncodedGop> gops;
  for (std::size_t start = 0; start < frames.size(); start += static_cast<std::size_t>(cfg.gop_size)) {
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(cfg.gop_size), frames.size() - start);
    ToyCodecConfig c = cfg;
    c.gop_size = static_cast<int>(n);
    if (c.frame_qp.size() > n) c.frame_qp.resize(n);
    if (!c.block_qp.empty()) {
      c.block_qp.assign(cfg.block_qp.begin() + static_cast<std::ptrdiff_t>(start),
                        cfg.block_qp.begin() + static_cast<std::ptrdiff_t>(start + n));
    }
    gops.push_back(encode_gop(frames.subspan(start, n), c));
  }
  return gops;
}

Planes planes_from_frame(const Tensor& chw) {
  if (chw.rank() != 3) throw ShapeError("expected [C, H, W], got " + to_string(chw.shape()));
  const Tensor f = chw.to(DType::kFloat32);
  const auto c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
  Planes planes;
  for (std::int64_t p = 0; p < c; ++p) {
    Tensor plane({h, w}, DType::kFloat32);
    auto o = plane.data<float>();
    const auto in = f.data<float>().subspan(static_cast<std::size_t>(p * h * w), static_cast<std::size_t>(h * w));
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = in[i] * 255.0f;
    planes.push_back(std::move(plane));
  }
  return planes;
}

Tensor frame_from_planes(const Planes& planes) {
  if (planes.empty()) throw ShapeError("no planes");
  const auto [h, w] = plane_hw(planes[0]);
  Tensor out({static_cast<std::int64_t>(planes.size()), h, w}, DType::kFloat32);
  auto o = out.data<float>();
  for (std::size_t p = 0; p < planes.size(); ++p) {
    if (planes[p].shape() != planes[0].shape()) throw ShapeError("frame_from_planes needs full-size planes");
    const auto in = planes[p].data<float>();
    for (std::size_t i = 0; i < in.size(); ++i) o[p * in.size() + i] = in[i] / 255.0f;
  }
  return out;
}

}  // namespace metabit
