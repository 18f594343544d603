#include "metabit/warp/warp.hpp"

#include <algorithm>
#include <cmath>

namespace metabit {

namespace {

void check_grid(const MVField& mv, int height, int width) {
  if (mv.block_size <= 0 || mv.grid_w != grid_extent(width, mv.block_size) ||
      mv.grid_h != grid_extent(height, mv.block_size) ||
      mv.mv.size() != static_cast<std::size_t>(mv.grid_w) * mv.grid_h) {
    throw ShapeError("MV grid " + std::to_string(mv.grid_w) + "x" + std::to_string(mv.grid_h) + " at block " +
                     std::to_string(mv.block_size) + " does not cover a " + std::to_string(width) + "x" +
                     std::to_string(height) + " image");
  }
}

std::pair<int, int> spatial_dims(const Shape& s) {
  if (s.size() < 2) throw ShapeError("warp input needs rank >= 2, got " + to_string(s));
  return {static_cast<int>(s[s.size() - 2]), static_cast<int>(s[s.size() - 1])};
}

}  // namespace

SpatialMap forward_warp_map(const MVField& mv, int height, int width) {
  check_grid(mv, height, width);
  SpatialMap m{height, width, {}, {}};
  const std::size_t n = static_cast<std::size_t>(height) * width;
  m.offsets.resize(n + 1);
  m.src.resize(n);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const auto& v = mv.at(x / mv.block_size, y / mv.block_size);
      const int sx = std::clamp(x + quarter_pel_to_pel(v.dx), 0, width - 1);
      const int sy = std::clamp(y + quarter_pel_to_pel(v.dy), 0, height - 1);
      const std::size_t t = static_cast<std::size_t>(y) * width + x;
      m.offsets[t] = static_cast<std::int32_t>(t);
      m.src[t] = sy * width + sx;
    }
  }
  m.offsets[n] = static_cast<std::int32_t>(n);
  return m;
}

ReverseWarpMap reverse_warp_map(const MVField& mv, int height, int width) {
  check_grid(mv, height, width);
  const std::size_t n = static_cast<std::size_t>(height) * width;
  std::vector<std::int32_t> target(n, -1);
  std::vector<std::int32_t> counts(n, 0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const auto& v = mv.at(x / mv.block_size, y / mv.block_size);
      const int tx = x + quarter_pel_to_pel(v.dx);
      const int ty = y + quarter_pel_to_pel(v.dy);
      if (tx < 0 || tx >= width || ty < 0 || ty >= height) continue;
      const int t = ty * width + tx;
      target[static_cast<std::size_t>(y) * width + x] = t;
      ++counts[t];
    }
  }
  // Bucket sources by target in ascending source order (counting sort), so
  // the summation order is fixed.
  ReverseWarpMap r;
  SpatialMap& m = r.map;
  m.height = height;
  m.width = width;
  m.offsets.assign(n + 1, 0);
  for (std::size_t t = 0; t < n; ++t) m.offsets[t + 1] = m.offsets[t] + std::max(counts[t], 1);
  m.src.resize(static_cast<std::size_t>(m.offsets[n]));
  std::vector<std::int32_t> fill(m.offsets.begin(), m.offsets.end() - 1);
  for (std::size_t t = 0; t < n; ++t) {
    if (counts[t] == 0) m.src[fill[t]++] = static_cast<std::int32_t>(t);
  }
  for (std::size_t s = 0; s < n; ++s) {
    const std::int32_t t = target[s];
    if (t < 0) continue;
    m.src[fill[t]++] = static_cast<std::int32_t>(s);
  }
  r.counts = std::move(counts);
  return r;
}

Tensor apply_spatial_map(const Tensor& x, const SpatialMap& map) {
  const auto [h, w] = spatial_dims(x.shape());
  if (h != map.height || w != map.width) {
    throw ShapeError("warp map is " + std::to_string(map.height) + "x" + std::to_string(map.width) +
                     ", input is " + to_string(x.shape()));
  }
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::size_t slices = static_cast<std::size_t>(x.numel()) / plane;
  Tensor out(x.shape(), x.dtype());
  visit_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const auto in = x.data<T>();
    auto o = out.data<T>();
    std::vector<T> values;
    for (std::size_t s = 0; s < slices; ++s) {
      const T* ip = in.data() + s * plane;
      T* op = o.data() + s * plane;
      for (std::size_t t = 0; t < plane; ++t) {
        const auto b = map.offsets[t], e = map.offsets[t + 1];
        if (e - b == 1) {
          op[t] = ip[map.src[b]];
          continue;
        }
        // Sum in value order so the mean does not depend on source order;
        // this keeps warps exactly equivariant under flips.
        T acc = 0;
        if (e - b == 2) {
          acc = ip[map.src[b]] + ip[map.src[b + 1]];
        } else {
          values.clear();
          for (auto k = b; k < e; ++k) values.push_back(ip[map.src[k]]);
          // NaNs order last so the comparison stays a strict weak order.
          std::sort(values.begin(), values.end(),
                    [](T a, T b) { return std::isnan(b) ? !std::isnan(a) : a < b; });
          for (T v : values) acc += v;
        }
        op[t] = acc / static_cast<T>(e - b);
      }
    }
  });
  return out;
}

namespace {

// Adjoint of apply_spatial_map.
Tensor apply_transpose(const Tensor& g, const SpatialMap& map) {
  const std::size_t plane = static_cast<std::size_t>(map.height) * map.width;
  const std::size_t slices = static_cast<std::size_t>(g.numel()) / plane;
  Tensor out = Tensor::zeros(g.shape(), g.dtype());
  visit_dtype(g.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const auto gi = g.data<T>();
    auto o = out.data<T>();
    for (std::size_t s = 0; s < slices; ++s) {
      const T* gp = gi.data() + s * plane;
      T* op = o.data() + s * plane;
      for (std::size_t t = 0; t < plane; ++t) {
        const auto b = map.offsets[t], e = map.offsets[t + 1];
        const T share = gp[t] / static_cast<T>(e - b);
        for (auto k = b; k < e; ++k) op[map.src[k]] += share;
      }
    }
  });
  return out;
}

}  // namespace

Var apply_spatial_map(const Var& x, const SpatialMap& map) {
  Tensor out = apply_spatial_map(x.value(), map);
  return make_op("spatial_map", std::move(out), {x}, [map](const BackwardArgs& a) {
    return std::vector<Tensor>{apply_transpose(a.grad_output, map)};
  });
}

Tensor forward_warp(const Tensor& x, const MVField& mv) {
  const auto [h, w] = spatial_dims(x.shape());
  return apply_spatial_map(x, forward_warp_map(mv, h, w));
}

Var forward_warp(const Var& x, const MVField& mv) {
  const auto [h, w] = spatial_dims(x.shape());
  return apply_spatial_map(x, forward_warp_map(mv, h, w));
}

ReverseWarpResult reverse_warp(const Var& x, const MVField& mv) {
  const auto [h, w] = spatial_dims(x.shape());
  auto r = reverse_warp_map(mv, h, w);
  Tensor coverage = Tensor::zeros({1, h, w}, DType::kFloat32);
  auto c = coverage.data<float>();
  for (std::size_t i = 0; i < r.counts.size(); ++i) c[i] = r.counts[i] > 0 ? 1.0f : 0.0f;
  return {apply_spatial_map(x, r.map), std::move(coverage), std::move(r.counts)};
}

AlignedVolume align_gop_features(const std::vector<Var>& p_features, const GopMetadata& meta) {
  if (meta.frames.empty() || p_features.size() + 1 != meta.frames.size()) {
    throw ShapeError("align_gop_features: " + std::to_string(p_features.size()) + " P feature maps for a " +
                     std::to_string(meta.frames.size()) + "-frame GOP");
  }
  AlignedVolume vol;
  for (std::size_t k = 1; k < meta.frames.size(); ++k) {
    Var f = p_features[k - 1];
    const auto [h, w] = spatial_dims(f.shape());
    Tensor cov = Tensor::full({1, h, w}, 1.0, DType::kFloat32);
    for (std::size_t hop = k; hop >= 1; --hop) {
      const auto& mv = meta.frames[hop].mv;
      if (!mv) throw ShapeError("GOP frame " + std::to_string(hop) + " has no motion vectors");
      auto r = reverse_warp_map(*mv, h, w);
      f = apply_spatial_map(f, r.map);
      cov = apply_spatial_map(cov, r.map);
      auto cd = cov.data<float>();
      for (std::size_t i = 0; i < r.counts.size(); ++i) {
        if (r.counts[i] == 0) cd[i] = 0.0f;
      }
    }
    vol.features.push_back(std::move(f));
    vol.coverage.push_back(std::move(cov));
  }
  return vol;
}

}  // namespace metabit
