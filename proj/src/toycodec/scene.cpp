#include "metabit/toycodec/scene.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace metabit {

namespace {

// Bilinearly interpolated random lattice with the given cell size.
std::vector<double> value_noise(int h, int w, int cell, std::mt19937_64& rng) {
  const int gh = h / cell + 2, gw = w / cell + 2;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> lattice(static_cast<std::size_t>(gh) * gw);
  for (auto& v : lattice) v = u(rng);
  std::vector<double> out(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    const double fy = static_cast<double>(y) / cell;
    const int y0 = static_cast<int>(fy);
    const double ty = fy - y0;
    for (int x = 0; x < w; ++x) {
      const double fx = static_cast<double>(x) / cell;
      const int x0 = static_cast<int>(fx);
      const double tx = fx - x0;
      auto L = [&](int yy, int xx) { return lattice[static_cast<std::size_t>(yy) * gw + xx]; };
      const double top = L(y0, x0) * (1 - tx) + L(y0, x0 + 1) * tx;
      const double bot = L(y0 + 1, x0) * (1 - tx) + L(y0 + 1, x0 + 1) * tx;
      out[static_cast<std::size_t>(y) * w + x] = top * (1 - ty) + bot * ty;
    }
  }
  return out;
}

}  // namespace

std::vector<Tensor> synthetic_scene(const SceneOptions& o) {
  std::mt19937_64 rng(o.seed);
  const int margin_x = std::abs(o.pan_x) * o.frames + 1;
  const int margin_y = std::abs(o.pan_y) * o.frames + 1;
  const int ch = o.height + 2 * margin_y, cw = o.width + 2 * margin_x;

  // Per-channel canvas: shared luminance structure plus a weaker colour term.
  std::vector<double> lum(static_cast<std::size_t>(ch) * cw, 0.0);
  double amp = 0.5;
  for (int cell = 32; cell >= 2; cell /= 2, amp *= 0.55) {
    const auto n = value_noise(ch, cw, cell, rng);
    for (std::size_t i = 0; i < lum.size(); ++i) lum[i] += amp * n[i];
  }
  std::vector<std::vector<double>> canvas(static_cast<std::size_t>(o.channels));
  for (auto& c : canvas) {
    const auto tint = value_noise(ch, cw, 16, rng);
    c.resize(lum.size());
    for (std::size_t i = 0; i < lum.size(); ++i) c[i] = 0.5 + 0.6 * lum[i] + 0.12 * tint[i];
  }

  struct Disc {
    double x, y, r, vx, vy;
    std::vector<double> colour;
  };
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Disc> discs;
  for (int d = 0; d < o.discs; ++d) {
    Disc disc{u(rng) * o.width, u(rng) * o.height, 4.0 + u(rng) * o.width / 8.0, u(rng) * 4 - 2, u(rng) * 4 - 2, {}};
    for (int c = 0; c < o.channels; ++c) disc.colour.push_back(0.1 + 0.8 * u(rng));
    discs.push_back(std::move(disc));
  }

  std::vector<Tensor> frames;
  for (int k = 0; k < o.frames; ++k) {
    Tensor f({o.channels, o.height, o.width}, DType::kFloat32);
    auto d = f.data<float>();
    // Content moves by (pan_x, pan_y) per frame.
    const int ox = margin_x - o.pan_x * k, oy = margin_y - o.pan_y * k;
    for (int c = 0; c < o.channels; ++c)
      for (int y = 0; y < o.height; ++y)
        for (int x = 0; x < o.width; ++x) {
          double v = canvas[c][static_cast<std::size_t>(y + oy) * cw + x + ox];
          for (const auto& disc : discs) {
            const double dx = x - (disc.x + disc.vx * k), dy = y - (disc.y + disc.vy * k);
            if (dx * dx + dy * dy <= disc.r * disc.r) v = disc.colour[c];
          }
          d[(static_cast<std::size_t>(c) * o.height + y) * o.width + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    frames.push_back(std::move(f));
  }
  return frames;
}

}  // namespace metabit
