#include <sstream>

#include "doctest.h"
#include "metabit/tensor/checkpoint.hpp"
#include "metabit/tensor/ops.hpp"
#include "support/random.hpp"

using namespace metabit;
using metabit::testing::random_tensor;

namespace {

// Direct nested-loop cross-correlation with zero padding.
std::vector<double> conv_oracle(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  const auto n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const auto co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const auto oh = (h + 2 * pad - kh) / stride + 1, ow = (wd + 2 * pad - kw) / stride + 1;
  std::vector<double> out;
  for (std::int64_t in = 0; in < n; ++in)
    for (std::int64_t o = 0; o < co; ++o)
      for (std::int64_t y = 0; y < oh; ++y)
        for (std::int64_t xx = 0; xx < ow; ++xx) {
          double acc = b.defined() ? b.item(o) : 0.0;
          for (std::int64_t c = 0; c < ci; ++c)
            for (std::int64_t ky = 0; ky < kh; ++ky)
              for (std::int64_t kx = 0; kx < kw; ++kx) {
                const auto iy = y * stride + ky - pad, ix = xx * stride + kx - pad;
                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                acc += x.item(((in * ci + c) * h + iy) * wd + ix) * w.item(((o * ci + c) * kh + ky) * kw + kx);
              }
          out.push_back(acc);
        }
  return out;
}

Var cst(Tensor t) { return Var::constant(std::move(t)); }

}  // namespace

TEST_CASE("tensor invariants") {
  Tensor t({2, 3});
  CHECK(t.numel() == 6);
  CHECK_THROWS_AS(Tensor({2, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor::from({2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
  CHECK(Tensor::scalar(3.0).numel() == 1);
  CHECK(t.reshaped({6}).shape() == Shape{6});
  CHECK_THROWS_AS(t.reshaped({4}), ShapeError);
}

TEST_CASE("conv2d examples") {
  SUBCASE("zero input gives zero output") {
    auto out = conv2d(cst(Tensor::zeros({1, 1, 3, 3})), cst(random_tensor({2, 1, 3, 3}, 1, -1, 1, DType::kFloat32)),
                      cst(Tensor::zeros({2})), {1, 1});
    for (double v : out.value().to_vector()) CHECK(v == 0.0);
  }
  SUBCASE("identity 1x1 kernel") {
    Tensor x = random_tensor({1, 1, 5, 4}, 2, -1, 1, DType::kFloat32);
    auto out = conv2d(cst(x), cst(Tensor::full({1, 1, 1, 1}, 1.0)), cst(Tensor::zeros({1})));
    CHECK(out.value() == x);
  }
  SUBCASE("ramp with 3x3 box kernel equals window sums") {
    std::vector<float> ramp(16);
    for (int i = 0; i < 16; ++i) ramp[static_cast<std::size_t>(i)] = static_cast<float>(i);
    Tensor x = Tensor::from({1, 1, 4, 4}, ramp);
    auto out = conv2d(cst(x), cst(Tensor::full({1, 1, 3, 3}, 1.0)), cst(Tensor::zeros({1})));
    REQUIRE(out.shape() == Shape{1, 1, 2, 2});
    // window sums of the 4x4 ramp, by hand: 45, 54, 81, 90
    CHECK(out.value().to_vector() == std::vector<double>{45, 54, 81, 90});
    auto oracle = conv_oracle(x, Tensor::full({1, 1, 3, 3}, 1.0), Tensor(), 1, 0);
    CHECK(out.value().to_vector() == oracle);
  }
  SUBCASE("channel mismatch") {
    CHECK_THROWS_AS(conv2d(cst(Tensor::zeros({1, 2, 4, 4})), cst(Tensor::zeros({1, 3, 3, 3})), Var()),
                    ShapeError);
  }
  SUBCASE("kernel larger than padded input") {
    CHECK_THROWS_AS(conv2d(cst(Tensor::zeros({1, 1, 2, 2})), cst(Tensor::zeros({1, 1, 5, 5})), Var(), {1, 1}),
                    ShapeError);
  }
}

TEST_CASE("conv2d matches nested-loop reference on random inputs") {
  struct Case { Shape x, w; int stride, pad; };
  const std::vector<Case> cases = {
      {{2, 4, 16, 16}, {3, 4, 3, 3}, 1, 1}, {{1, 3, 9, 7}, {5, 3, 3, 3}, 2, 1},
      {{2, 2, 8, 8}, {2, 2, 4, 4}, 2, 1},   {{1, 4, 16, 16}, {4, 4, 5, 5}, 1, 0},
      {{2, 1, 6, 11}, {2, 1, 1, 1}, 1, 0},  {{1, 2, 5, 5}, {3, 2, 3, 3}, 3, 2}};
  std::uint64_t seed = 10;
  for (const auto& c : cases) {
    Tensor x = random_tensor(c.x, seed++, -1, 1, DType::kFloat32);
    Tensor w = random_tensor(c.w, seed++, -1, 1, DType::kFloat32);
    Tensor b = random_tensor({c.w[0]}, seed++, -1, 1, DType::kFloat32);
    auto out = conv2d(cst(x), cst(w), cst(b), {c.stride, c.pad});
    auto oracle = conv_oracle(x, w, b, c.stride, c.pad);
    REQUIRE(out.value().numel() == static_cast<std::int64_t>(oracle.size()));
    double worst = 0;
    for (std::size_t i = 0; i < oracle.size(); ++i) worst = std::max(worst, std::abs(out.value().item(static_cast<std::int64_t>(i)) - oracle[i]));
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("elementwise examples") {
  Tensor x = random_tensor({2, 3}, 3, -1, 1, DType::kFloat32);
  CHECK(add(cst(x), cst(Tensor::zeros({2, 3}))).value() == x);
  CHECK(elementwise(ElementwiseOp::kAdd, cst(x), cst(Tensor::zeros({1, 1}))).value() == x);
  auto s = sigmoid(cst(Tensor::zeros({4})));
  for (double v : s.value().to_vector()) CHECK(v == 0.5);
  auto lr = leaky_relu(cst(Tensor::from({2}, std::vector<float>{-1, 2})), 0.2);
  CHECK(lr.value().item(0) == doctest::Approx(-0.2));
  CHECK(lr.value().item(1) == 2.0);
  auto c = clamp(cst(Tensor::from({3}, std::vector<float>{-1, 0.5f, 3})), 0, 1);
  CHECK(c.value().to_vector() == std::vector<double>{0, 0.5, 1});
  // [2,1] * [1,3] -> [2,3]
  auto m = mul(cst(Tensor::from({2, 1}, std::vector<float>{1, 2})), cst(Tensor::from({1, 3}, std::vector<float>{1, 2, 3})));
  CHECK(m.value().to_vector() == std::vector<double>{1, 2, 3, 2, 4, 6});
  CHECK_THROWS_AS(add(cst(Tensor::zeros({2, 3})), cst(Tensor::zeros({3, 2}))), ShapeError);
  CHECK_THROWS_AS(add(cst(Tensor::zeros({2, 3})), cst(Tensor::zeros({6}))), ShapeError);
}

TEST_CASE("reduce examples") {
  CHECK(sum(cst(Tensor::full({2, 3}, 1.0))).value().item() == 6.0);
  CHECK(mean(cst(Tensor::from({4}, std::vector<float>{1, 2, 3, 4}))).value().item() == 2.5);
  auto gap = global_avg_pool(cst(Tensor::full({1, 3, 5, 5}, 0.7)));
  CHECK(gap.shape() == Shape{1, 3, 1, 1});
  for (double v : gap.value().to_vector()) CHECK(v == doctest::Approx(0.7));
  auto rows = reduce(ReduceOp::kSum, cst(Tensor::from({2, 2}, std::vector<float>{1, 2, 3, 4})), {1});
  CHECK(rows.shape() == Shape{2});
  CHECK(rows.value().to_vector() == std::vector<double>{3, 7});
  CHECK_THROWS_AS(reduce(ReduceOp::kSum, cst(Tensor::zeros({2})), {}), ShapeError);
  CHECK_THROWS_AS(reduce(ReduceOp::kMean, cst(Tensor::zeros({2})), {3}), ShapeError);
}

TEST_CASE("concat examples") {
  std::vector<Var> parts{cst(Tensor::zeros({1, 64, 8, 8}))};
  for (int i = 0; i < 6; ++i) parts.push_back(cst(Tensor::zeros({1, 16, 8, 8})));
  CHECK(concat(parts, 1).shape() == Shape{1, 160, 8, 8});
  Tensor single = random_tensor({1, 3, 4, 4}, 4, -1, 1, DType::kFloat32);
  CHECK(concat({cst(single)}, 1).value() == single);
  Tensor a = random_tensor({1, 3, 4, 4}, 5, -1, 1, DType::kFloat32);
  auto six = concat({cst(a), cst(single)}, 1);
  CHECK(six.shape() == Shape{1, 6, 4, 4});
  CHECK(six.value().item(3 * 16) == single.item(0));
  CHECK_THROWS_AS(concat({cst(Tensor::zeros({1, 3, 4, 4})), cst(Tensor::zeros({1, 3, 4, 5}))}, 1), ShapeError);
}

TEST_CASE("avg_downsample2x") {
  auto c = avg_downsample2x(cst(Tensor::full({1, 1, 6, 6}, 0.25)));
  CHECK(c.shape() == Shape{1, 1, 3, 3});
  for (double v : c.value().to_vector()) CHECK(v == 0.25);
  auto d = avg_downsample2x(cst(Tensor::from({1, 1, 2, 2}, std::vector<float>{0, 2, 4, 6})));
  CHECK(d.value().to_vector() == std::vector<double>{3});
  CHECK_THROWS_AS(avg_downsample2x(cst(Tensor::zeros({1, 1, 1, 4}))), ShapeError);

  for (Shape s : {Shape{1, 1, 8, 8}, Shape{2, 3, 7, 5}}) {
    Tensor x = random_tensor(s, 6, -1, 1);
    auto out = avg_downsample2x(cst(x));
    const auto h = s[2], w = s[3], oh = (h + 1) / 2, ow = (w + 1) / 2;
    for (std::int64_t p = 0; p < s[0] * s[1]; ++p)
      for (std::int64_t y = 0; y < oh; ++y)
        for (std::int64_t xx = 0; xx < ow; ++xx) {
          double acc = 0;
          int n = 0;
          for (auto yy = 2 * y; yy < std::min(2 * y + 2, h); ++yy)
            for (auto xi = 2 * xx; xi < std::min(2 * xx + 2, w); ++xi) {
              acc += x.item((p * h + yy) * w + xi);
              ++n;
            }
          CHECK(out.value().item((p * oh + y) * ow + xx) == doctest::Approx(acc / n).epsilon(1e-12));
        }
  }
}

TEST_CASE("pad_reflect") {
  auto p = pad_reflect(cst(Tensor::from({1, 1, 1, 3}, std::vector<float>{1, 2, 3})), 0, 0, 2, 4);
  CHECK(p.value().to_vector() == std::vector<double>{3, 2, 1, 2, 3, 2, 1, 2, 3});
}

TEST_CASE("checkpoint layout and round trip") {
  std::vector<NamedTensor> tensors{{"a", Tensor::from({2}, std::vector<float>{1.0f, -2.5f})},
                                   {"conv.w", random_tensor({2, 1, 3, 3}, 7, -1, 1, DType::kFloat32)}};
  std::stringstream ss;
  write_checkpoint(ss, tensors);
  const std::string bytes = ss.str();
  // magic 4 + version 2 + count 4, then "a": 2 + 1 + rank 1 + extent 4 + 2 floats 8
  REQUIRE(bytes.size() == 10 + (2 + 1 + 1 + 4 + 8) + (2 + 6 + 1 + 16 + 18 * 4));
  CHECK(bytes.substr(0, 4) == "MBWT");
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 0);
  CHECK(bytes[6] == 2);
  const std::string one_f32("\x00\x00\x80\x3f", 4);
  CHECK(bytes.substr(18, 4) == one_f32);
  auto back = read_checkpoint(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[0].name == "a");
  CHECK(back[0].value == tensors[0].value);
  CHECK(back[1].value == tensors[1].value);

  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_checkpoint(truncated), CheckpointError);
  std::stringstream bad("XXXX");
  CHECK_THROWS_AS(read_checkpoint(bad), CheckpointError);
}
