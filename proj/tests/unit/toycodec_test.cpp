#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "metabit/toycodec/scene.hpp"
#include "metabit/toycodec/toycodec.hpp"
#include "metabit/warp/warp.hpp"

using namespace metabit;

namespace {

Tensor random_plane(int h, int w, std::uint64_t seed, double lo = 0, double hi = 255) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t({h, w}, DType::kFloat32);
  for (auto& v : t.data<float>()) v = static_cast<float>(d(rng));
  return t;
}

// Direct float DCT from the defining double sum.
Block8 dct_oracle(const Block8& b) {
  Block8 out{};
  for (int u = 0; u < 8; ++u)
    for (int v = 0; v < 8; ++v) {
      const double au = u == 0 ? std::sqrt(0.125) : 0.5, av = v == 0 ? std::sqrt(0.125) : 0.5;
      double s = 0;
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
          s += b[y * 8 + x] * std::cos((2 * y + 1) * u * std::numbers::pi / 16) *
               std::cos((2 * x + 1) * v * std::numbers::pi / 16);
      out[u * 8 + v] = au * av * s;
    }
  return out;
}

double psnr255(const Tensor& a, const Tensor& b) {
  const auto x = a.data<float>(), y = b.data<float>();
  double se = 0;
  for (std::size_t i = 0; i < x.size(); ++i) se += (double(x[i]) - y[i]) * (double(x[i]) - y[i]);
  const double mse = se / x.size();
  return mse < 1e-10 ? 100.0 : 10 * std::log10(255.0 * 255.0 / mse);
}

std::vector<Planes> scene_planes(const SceneOptions& o) {
  std::vector<Planes> out;
  for (const auto& f : synthetic_scene(o)) out.push_back(planes_from_frame(f));
  return out;
}

// Shifts a plane so content moves by (sx, sy); exposed borders take the edge.
Tensor translate(const Tensor& p, int sx, int sy) {
  const int h = static_cast<int>(p.dim(0)), w = static_cast<int>(p.dim(1));
  Tensor out({h, w}, DType::kFloat32);
  const auto in = p.data<float>();
  auto o = out.data<float>();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      o[y * w + x] = in[std::clamp(y - sy, 0, h - 1) * w + std::clamp(x - sx, 0, w - 1)];
  return out;
}

}  // namespace

TEST_CASE("quantizer step doubles every 6 QP") {
  CHECK(quant_step(4) == 1.0);
  CHECK(quant_step(10) == doctest::Approx(2.0));
  CHECK(quant_step(35) == doctest::Approx(std::exp2(31.0 / 6.0)));
  CHECK_THROWS(quant_step(52));
  CHECK_THROWS(quant_step(-1));
}

TEST_CASE("DCT matches the defining sum and is orthonormal") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(-100, 100);
  for (int trial = 0; trial < 20; ++trial) {
    Block8 b;
    for (auto& v : b) v = d(rng);
    const Block8 c = dct8x8(b), o = dct_oracle(b);
    double energy_in = 0, energy_out = 0;
    for (int i = 0; i < 64; ++i) {
      REQUIRE(std::abs(c[i] - o[i]) < 1e-9);
      energy_in += b[i] * b[i];
      energy_out += c[i] * c[i];
    }
    CHECK(energy_out == doctest::Approx(energy_in).epsilon(1e-12));
    const Block8 back = idct8x8(c);
    for (int i = 0; i < 64; ++i) REQUIRE(std::abs(back[i] - b[i]) < 1e-9);
  }
}

TEST_CASE("quantize_block examples") {
  Block8 zero{};
  for (int qp : {0, 20, 51}) {
    const auto r = dequantize_block(quantize_block(zero, qp), qp);
    for (double v : r) CHECK(v == 0.0);
  }

  // Integer-valued coefficients at qp 4 (step 1) reconstruct exactly.
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> coef(-50, 50);
  Block8 c;
  for (auto& v : c) v = coef(rng);
  const Block8 pixels = idct8x8(c);
  const auto levels = quantize_block(pixels, 4);
  for (int i = 0; i < 64; ++i) CHECK(levels[i] == static_cast<int>(c[i]));
  const Block8 back = dequantize_block(levels, 4);
  for (int i = 0; i < 64; ++i) CHECK(std::abs(back[i] - pixels[i]) < 1e-9);

  // Rounding is symmetric about zero (half away from zero, not half up).
  std::uniform_real_distribution<double> px(-60, 60);
  for (int trial = 0; trial < 20; ++trial) {
    Block8 b, nb;
    for (int i = 0; i < 64; ++i) nb[i] = -(b[i] = px(rng));
    const auto lp = quantize_block(b, 20), ln = quantize_block(nb, 20);
    for (int i = 0; i < 64; ++i) REQUIRE(ln[i] == -lp[i]);
  }
}

TEST_CASE("quantization error at qp 35 against a direct DCT oracle") {
  const double step = quant_step(35);
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> d(-120, 120);
  for (int trial = 0; trial < 50; ++trial) {
    Block8 r;
    for (auto& v : r) v = d(rng);
    const Block8 coeffs = dct_oracle(r);
    const auto levels = quantize_block(r, 35);
    Block8 err_coeffs;
    for (int i = 0; i < 64; ++i) {
      const double rounded = coeffs[i] / step >= 0 ? std::floor(coeffs[i] / step + 0.5) : -std::floor(-coeffs[i] / step + 0.5);
      REQUIRE(levels[i] == static_cast<int>(rounded));
      err_coeffs[i] = coeffs[i] - levels[i] * step;
      REQUIRE(std::abs(err_coeffs[i]) <= step / 2 + 1e-9);
    }
    // The pixel error is the inverse transform of the coefficient error; by
    // orthonormality its energy is bounded by 64 * (step/2)^2.
    const Block8 rec = dequantize_block(levels, 35);
    double err_energy = 0;
    for (int i = 0; i < 64; ++i) err_energy += (rec[i] - r[i]) * (rec[i] - r[i]);
    CHECK(err_energy <= 64 * step * step / 4 + 1e-6);
    const Block8 oracle_err = idct8x8(err_coeffs);
    for (int i = 0; i < 64; ++i) CHECK(std::abs((r[i] - rec[i]) - oracle_err[i]) < 1e-9);
  }
}

TEST_CASE("motion search") {
  const Tensor a = random_plane(48, 48, 1);
  SUBCASE("identical frames") {
    const auto r = motion_search(a, a, 16, 16, 16, 16, 8);
    CHECK(r.dx == 0);
    CHECK(r.dy == 0);
    CHECK(r.sad == 0.0);
  }
  SUBCASE("translated by (+3,-2): vector points back to the source") {
    // Content moves +3 right and 2 up, so the block came from (x-3, y+2).
    const Tensor b = translate(a, 3, -2);
    const auto r = motion_search(b, a, 16, 16, 16, 16, 8);
    CHECK(r.dx == -3);
    CHECK(r.dy == 2);
    CHECK(r.sad == 0.0);
  }
  SUBCASE("radius 0") {
    const auto r = motion_search(translate(a, 3, -2), a, 16, 16, 16, 16, 0);
    CHECK(r.dx == 0);
    CHECK(r.dy == 0);
  }
  SUBCASE("ties prefer short vectors, then smaller dy, then smaller dx") {
    const Tensor flat = Tensor::full({32, 32}, 7.0);
    auto r = motion_search(flat, flat, 8, 8, 16, 16, 4);
    CHECK(r.dx == 0);
    CHECK(r.dy == 0);
    // A single bright column at x=12 in cur; ref has it at x=11 and x=13.
    Tensor cur = Tensor::zeros({32, 32}), ref = Tensor::zeros({32, 32});
    for (int y = 0; y < 32; ++y) {
      cur.set_item(y * 32 + 12, 100);
      ref.set_item(y * 32 + 11, 100);
      ref.set_item(y * 32 + 13, 100);
    }
    r = motion_search(cur, ref, 8, 8, 8, 8, 3);
    CHECK(r.dx == -1);  // same |d| and dy, smaller dx wins
    CHECK(r.dy == 0);
  }
}

TEST_CASE("globally translated sequence at qp 4: vectors equal the translation, near-lossless") {
  // Content pans by (+2, +1) per frame; vectors point back by (-2, -1) pel.
  const auto frames = scene_planes({7, 64, 96, 1, 2, 1, 0, 9});
  const auto enc = encode_gop(frames, ToyCodecConfig::constant(4));
  for (std::size_t f = 1; f < 7; ++f) {
    const auto& mv = *enc.meta.frames[f].mv;
    for (int by = 1; by < mv.grid_h - 1; ++by)
      for (int bx = 1; bx < mv.grid_w - 1; ++bx) CHECK((mv.at(bx, by) == MotionVector{-8, -4}));
  }
  for (std::size_t f = 0; f < 7; ++f) CHECK(psnr255(enc.recon[f][0], frames[f][0]) > 45.0);
}

TEST_CASE("metadata faithfulness: forward warp of the previous reconstruction plus residual") {
  const std::vector<Planes> frames = scene_planes({7, 48, 64, 3, 2, -1, 3, 4});
  // Mix in 4:2:0 chroma planes to exercise halved vectors.
  std::vector<Planes> yuv_build;
  for (const auto& f : frames) {
    Tensor u({24, 32}, DType::kFloat32), v({24, 32}, DType::kFloat32);
    const auto s1 = f[1].data<float>(), s2 = f[2].data<float>();
    for (int y = 0; y < 24; ++y)
      for (int x = 0; x < 32; ++x) {
        u.data<float>()[y * 32 + x] = s1[(2 * y) * 64 + 2 * x];
        v.data<float>()[y * 32 + x] = s2[(2 * y) * 64 + 2 * x];
      }
    yuv_build.push_back({f[0], u, v});
  }
  const std::vector<Planes> yuv = yuv_build;
  for (const std::vector<Planes>* clip : {&frames, &yuv}) {
    ToyCodecConfig cfg = ToyCodecConfig::constant(30);
    cfg.frame_qp = {22, 30, 35, 28, 40, 30, 33};
    const auto enc = encode_gop(*clip, cfg);
    for (std::size_t f = 1; f < 7; ++f) {
      for (std::size_t p = 0; p < clip->front().size(); ++p) {
        const Tensor& rec = enc.recon[f][p];
        const int scale = plane_scale((*clip)[0][0], (*clip)[0][p]);
        const Tensor pred = forward_warp(enc.recon[f - 1][p], plane_motion(*enc.meta.frames[f].mv, scale));
        const Tensor res = dequantized_residual(enc.coded[f].levels[p], static_cast<int>(rec.dim(0)),
                                                static_cast<int>(rec.dim(1)), enc.meta.frames[f].qp, scale);
        const auto a = pred.data<float>(), b = res.data<float>(), r = rec.data<float>();
        for (std::size_t i = 0; i < r.size(); ++i) REQUIRE(a[i] + b[i] == r[i]);
      }
    }
    validate(enc.meta);
  }
}

TEST_CASE("decoder determinism: stored levels reproduce reconstructions bit-exactly") {
  const auto frames = scene_planes({7, 40, 56, 3, 1, 1, 2, 8});
  const auto enc = encode_gop(frames, ToyCodecConfig::constant(35));
  std::vector<std::pair<int, int>> dims;
  for (const auto& p : frames[0]) dims.emplace_back(static_cast<int>(p.dim(0)), static_cast<int>(p.dim(1)));
  const auto dec = decode_gop(enc.coded, enc.meta, dims);
  REQUIRE(dec.size() == 7);
  for (std::size_t f = 0; f < 7; ++f)
    for (std::size_t p = 0; p < 3; ++p) CHECK(dec[f][p] == enc.recon[f][p]);
  const auto again = encode_gop(frames, ToyCodecConfig::constant(35));
  CHECK(again.bit_estimate == enc.bit_estimate);
}

TEST_CASE("monotonicity in QP: PSNR and bit estimate fall as QP rises") {
  const auto frames = scene_planes({7, 64, 64, 3, 2, 1, 3, 12});
  double last_psnr = 1e9, last_bits = 1e18;
  for (int qp : {4, 20, 35, 50}) {
    const auto enc = encode_gop(frames, ToyCodecConfig::constant(qp));
    double psnr = 0;
    for (std::size_t f = 0; f < 7; ++f)
      for (std::size_t p = 0; p < 3; ++p) psnr += psnr255(enc.recon[f][p], frames[f][p]) / 21.0;
    MESSAGE("qp " << qp << ": PSNR " << psnr << " dB, bits " << enc.bit_estimate);
    CHECK(psnr <= last_psnr);
    CHECK(enc.bit_estimate < last_bits);
    last_psnr = psnr;
    last_bits = enc.bit_estimate;
  }
}

TEST_CASE("per-block QP schedule and per-frame QPs are recorded in metadata") {
  const auto frames = scene_planes({3, 32, 48, 1, 1, 0, 0, 2});
  ToyCodecConfig cfg;
  cfg.gop_size = 3;
  for (int f = 0; f < 3; ++f) {
    auto q = qp_map_from_slice(20, 48, 32, 16);
    q.at(2, 1) = static_cast<std::uint8_t>(40 + f);
    cfg.block_qp.push_back(q);
  }
  const auto enc = encode_gop(frames, cfg);
  for (int f = 0; f < 3; ++f) CHECK(enc.meta.frames[f].qp == cfg.block_qp[f]);
  // The coarse block is visibly worse than the fine ones in the I frame.
  double err_fine = 0, err_coarse = 0;
  const auto r = enc.recon[0][0].data<float>(), s = frames[0][0].data<float>();
  for (int y = 16; y < 32; ++y)
    for (int x = 0; x < 48; ++x) (x >= 32 ? err_coarse : err_fine) += std::abs(r[y * 48 + x] - s[y * 48 + x]);
  CHECK(err_coarse / 256 > err_fine / 512);
}

TEST_CASE("encode_gop errors and sequence splitting") {
  const auto frames = scene_planes({9, 32, 32, 1, 1, 0, 0, 3});
  CHECK_THROWS(encode_gop(std::span(frames).first(6), ToyCodecConfig::constant(30)));
  CHECK_THROWS(encode_gop(std::span(frames).first(7), ToyCodecConfig::constant(60)));
  const auto gops = encode_sequence(frames, ToyCodecConfig::constant(30));
  REQUIRE(gops.size() == 2);
  CHECK(gops[0].meta.frames.size() == 7);
  CHECK(gops[1].meta.frames.size() == 2);
  CHECK(gops[1].meta.frames[0].type == FrameType::kI);
}

TEST_CASE("synthetic scene is deterministic and in range") {
  const auto a = synthetic_scene({3, 16, 24, 3, 1, 1, 2, 99});
  const auto b = synthetic_scene({3, 16, 24, 3, 1, 1, 2, 99});
  REQUIRE(a.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a[i] == b[i]);
    CHECK(a[i].shape() == Shape{3, 16, 24});
    for (float v : a[i].data<float>()) REQUIRE((v >= 0.0f && v <= 1.0f));
  }
}
