#include <random>

#include "doctest.h"
#include "metabit/tensor/gradcheck.hpp"
#include "metabit/warp/warp.hpp"
#include "support/random.hpp"
#include "support/weighted_sum.hpp"

using namespace metabit;
using metabit::testing::random_tensor;
using metabit::testing::weighted_sum;

namespace {

MVField random_field(int h, int w, int bs, std::uint64_t seed, int max_q = 40) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> d(-max_q, max_q);
  auto f = MVField::zeros(w, h, bs);
  for (auto& v : f.mv) v = {static_cast<std::int16_t>(d(rng)), static_cast<std::int16_t>(d(rng))};
  return f;
}

double at(const Tensor& t, int c, int y, int x) {
  const auto h = t.dim(t.rank() - 2), w = t.dim(t.rank() - 1);
  return t.item((c * h + y) * w + x);
}

// Frame with every pixel distinct, so misrouted copies are detected.
Tensor ramp(int c, int h, int w) {
  Tensor t({c, h, w}, DType::kFloat64);
  for (std::int64_t i = 0; i < t.numel(); ++i) t.set_item(i, static_cast<double>(i) * 0.5 + 1.0);
  return t;
}

}  // namespace

TEST_CASE("quarter-pel rounding is half away from zero") {
  CHECK(quarter_pel_to_pel(0) == 0);
  CHECK(quarter_pel_to_pel(1) == 0);
  CHECK(quarter_pel_to_pel(2) == 1);
  CHECK(quarter_pel_to_pel(-2) == -1);
  CHECK(quarter_pel_to_pel(-1) == 0);
  CHECK(quarter_pel_to_pel(-64) == -16);
  CHECK(quarter_pel_to_pel(6) == 2);
  CHECK(quarter_pel_to_pel(-6) == -2);
}

TEST_CASE("zero vectors: both warps are the identity, coverage 1") {
  const Tensor x = random_tensor({3, 20, 36}, 1);
  const auto mv = MVField::zeros(36, 20, 16);
  CHECK(forward_warp(x, mv) == x);
  auto r = reverse_warp(Var::constant(x), mv);
  CHECK(r.features.value() == x);
  for (double c : r.coverage.to_vector()) CHECK(c == 1.0);
}

TEST_CASE("uniform -16 px vector shifts content right by one block column") {
  const Tensor x = ramp(2, 32, 48);
  const auto mv = MVField::uniform(48, 32, 16, {-64, 0});
  const Tensor out = forward_warp(x, mv);
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < 32; ++y)
      for (int xx = 0; xx < 48; ++xx) REQUIRE(at(out, c, y, xx) == at(x, c, y, std::max(xx - 16, 0)));
}

TEST_CASE("forward warp matches a per-pixel gather oracle on random fields") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const int h = 27, w = 41, bs = 8;
    const Tensor x = random_tensor({2, h, w}, seed);
    const auto mv = random_field(h, w, bs, seed + 10);
    const Tensor out = forward_warp(x, mv);
    for (int c = 0; c < 2; ++c)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
          const auto& v = mv.at(xx / bs, y / bs);
          const int sx = std::clamp(xx + quarter_pel_to_pel(v.dx), 0, w - 1);
          const int sy = std::clamp(y + quarter_pel_to_pel(v.dy), 0, h - 1);
          REQUIRE(at(out, c, y, xx) == at(x, c, sy, sx));
        }
  }
}

TEST_CASE("reverse warp of a uniform block shift inverts the forward warp on interior cells") {
  const Tensor x = ramp(1, 48, 48);
  const auto mv = MVField::uniform(48, 48, 16, {-64, 0});
  const Tensor fwd = forward_warp(x, mv);
  auto rev = reverse_warp(Var::constant(fwd), mv);
  // Content moved right by 16; reverse moves it back left. Columns 16..47 of
  // fwd land on 0..31, and those equal the original.
  for (int y = 0; y < 48; ++y) {
    for (int xx = 0; xx < 32; ++xx) {
      REQUIRE(at(rev.features.value(), 0, y, xx) == at(x, 0, y, xx));
      REQUIRE(rev.coverage.item(y * 48 + xx) == 1.0);
    }
    // The last block column is never written: identity fallback, coverage 0.
    for (int xx = 32; xx < 48; ++xx) {
      REQUIRE(at(rev.features.value(), 0, y, xx) == at(fwd, 0, y, xx));
      REQUIRE(rev.coverage.item(y * 48 + xx) == 0.0);
    }
  }
}

TEST_CASE("overlapping reverse writes are averaged") {
  // 2x1 blocks of 4x4; both blocks point at the left block's position.
  Tensor x({1, 4, 8}, DType::kFloat64);
  for (int y = 0; y < 4; ++y)
    for (int xx = 0; xx < 8; ++xx) x.set_item(y * 8 + xx, xx < 4 ? 2.0 : 10.0);
  auto mv = MVField::zeros(8, 4, 4);
  mv.at(1, 0) = {-16, 0};
  auto r = reverse_warp(Var::constant(x), mv);
  for (int y = 0; y < 4; ++y) {
    for (int xx = 0; xx < 4; ++xx) {
      CHECK(r.features.value().item(y * 8 + xx) == 6.0);
      CHECK(r.counts[y * 8 + xx] == 2);
      CHECK(r.coverage.item(y * 8 + xx) == 1.0);
    }
    for (int xx = 4; xx < 8; ++xx) {
      CHECK(r.features.value().item(y * 8 + xx) == 10.0);  // hole: identity
      CHECK(r.coverage.item(y * 8 + xx) == 0.0);
    }
  }
}

TEST_CASE("forward(reverse(X)) = X where the reverse write is unique and in bounds") {
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const int h = 32, w = 48, bs = 8;
    const Tensor x = random_tensor({3, h, w}, seed);
    const auto mv = random_field(h, w, bs, 1000 + seed, 48);
    auto rev = reverse_warp(Var::constant(x), mv);
    const Tensor round_trip = forward_warp(rev.features.value(), mv);
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) {
        const auto& v = mv.at(xx / bs, y / bs);
        const int tx = xx + quarter_pel_to_pel(v.dx), ty = y + quarter_pel_to_pel(v.dy);
        if (tx < 0 || tx >= w || ty < 0 || ty >= h || rev.counts[ty * w + tx] != 1) continue;
        ++checked;
        for (int c = 0; c < 3; ++c) REQUIRE(at(round_trip, c, y, xx) == at(x, c, y, xx));
      }
  }
  CHECK(checked > 5000);
}

TEST_CASE("warps accept batched [N,C,H,W] input and reject mismatched grids") {
  const Tensor x = random_tensor({2, 3, 16, 16}, 3);
  const auto mv = random_field(16, 16, 8, 4);
  const Tensor out = forward_warp(x, mv);
  CHECK(out.shape() == x.shape());
  CHECK(forward_warp(narrow(Var::constant(x), 0, 1, 1), mv).value() == narrow(Var::constant(out), 0, 1, 1).value());
  CHECK_THROWS_AS(forward_warp(x, MVField::zeros(32, 16, 8)), ShapeError);
  CHECK_THROWS_AS(reverse_warp(Var::constant(x), MVField::zeros(24, 16, 8)), ShapeError);
}

TEST_CASE("warp gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto mv = random_field(12, 20, 4, 50 + seed, 24);
    auto fwd = gradcheck([&](const std::vector<Var>& v) { return weighted_sum(forward_warp(v[0], mv)); },
                         {random_tensor({1, 3, 12, 20}, seed)});
    CHECK_MESSAGE(fwd.passed, fwd.worst);
    auto rev = gradcheck([&](const std::vector<Var>& v) { return weighted_sum(reverse_warp(v[0], mv).features); },
                         {random_tensor({1, 3, 12, 20}, seed + 7)});
    CHECK_MESSAGE(rev.passed, rev.worst);
  }
}

TEST_CASE("align_gop_features") {
  const int h = 48, w = 64, bs = 16;
  auto make_meta = [&](int frames, MotionVector v) {
    GopMetadata m{w, h, bs, {}};
    m.frames.push_back({FrameType::kI, qp_map_from_slice(30, w, h, bs), std::nullopt});
    for (int k = 1; k < frames; ++k)
      m.frames.push_back({FrameType::kP, qp_map_from_slice(30, w, h, bs), MVField::uniform(w, h, bs, v)});
    return m;
  };

  SUBCASE("static metadata leaves features unchanged") {
    std::vector<Var> feats;
    for (int k = 1; k < 7; ++k) feats.push_back(Var::constant(random_tensor({1, 4, h, w}, k)));
    auto vol = align_gop_features(feats, make_meta(7, {0, 0}));
    REQUIRE(vol.features.size() == 6);
    for (int k = 0; k < 6; ++k) {
      CHECK(vol.features[k].value() == feats[k].value());
      for (double c : vol.coverage[k].to_vector()) CHECK(c == 1.0);
    }
  }

  SUBCASE("gop of 2 is a single reverse warp") {
    const auto meta = make_meta(2, {8, -4});
    const Var f = Var::constant(random_tensor({1, 2, h, w}, 9));
    auto vol = align_gop_features({f}, meta);
    auto direct = reverse_warp(f, *meta.frames[1].mv);
    CHECK(vol.features[0].value() == direct.features.value());
    CHECK(vol.coverage[0] == direct.coverage);
  }

  SUBCASE("translated sequence: alignment reduces interior L1 to the I frame for every P index") {
    // Scene content moves +2 px right per frame; the vectors point back by 2 px.
    const int pad = 20;
    const Tensor scene = random_tensor({1, 1, h, w + 2 * pad}, 77, 0, 1);
    auto frame_at = [&](int k) { return narrow(Var::constant(scene), 3, pad - 2 * k, w).value(); };
    const auto meta = make_meta(7, {-8, 0});
    std::vector<Var> feats;
    for (int k = 1; k < 7; ++k) feats.push_back(Var::constant(frame_at(k)));
    auto vol = align_gop_features(feats, meta);
    const Tensor i_frame = frame_at(0);
    for (int k = 1; k < 7; ++k) {
      double aligned = 0, unaligned = 0;
      int n = 0;
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w - 2 * 6; ++xx) {
          const double ref = at(i_frame, 0, y, xx);
          aligned += std::abs(at(vol.features[k - 1].value(), 0, y, xx) - ref);
          unaligned += std::abs(at(feats[k - 1].value(), 0, y, xx) - ref);
          ++n;
        }
      CAPTURE(k);
      CHECK(aligned / n < 1e-12);
      CHECK(unaligned / n > 0.1);
    }
  }

  CHECK_THROWS_AS(align_gop_features({}, make_meta(3, {0, 0})), ShapeError);
}
