#include "metabit/evalcli/gradient_suite.hpp"

#include <cmath>
#include <random>

#include "metabit/losses/losses.hpp"
#include "metabit/pipeline/pipeline.hpp"
#include "metabit/tensor/ops.hpp"
#include "metabit/warp/warp.hpp"

namespace metabit {

namespace {

constexpr DType f64 = DType::kFloat64;

Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(std::move(shape), f64);
  for (std::int64_t i = 0; i < t.numel(); ++i) t.set_item(i, dist(rng));
  return t;
}

// Position-dependent weights make the checks sensitive to misplaced elements.
Var weighted_sum(const Var& v) {
  Tensor w(v.shape(), v.dtype());
  for (std::int64_t i = 0; i < w.numel(); ++i) w.set_item(i, std::sin(0.37 * static_cast<double>(i) + 0.1));
  return sum(mul(v, Var::constant(w)));
}

MVField random_field(int h, int w, int bs, std::uint64_t seed, int max_q) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> q(-max_q, max_q);
  MVField f = MVField::zeros(w, h, bs);
  for (auto& v : f.mv) v = {static_cast<std::int16_t>(q(rng)), static_cast<std::int16_t>(q(rng))};
  return f;
}

GopMetadata random_gop(int w, int h, int n, int bs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> qd(22, 45);
  GopMetadata g{w, h, bs, {}};
  for (int k = 0; k < n; ++k) {
    FrameMetadata f;
    f.type = k == 0 ? FrameType::kI : FrameType::kP;
    f.qp = qp_map_from_slice(30, w, h, bs);
    for (auto& q : f.qp.qp) q = static_cast<std::uint8_t>(qd(rng));
    if (k > 0) f.mv = random_field(h, w, bs, seed * 17 + k, 12);
    g.frames.push_back(f);
  }
  return g;
}

}  // namespace

std::vector<GradientCheck> run_gradient_suite(const std::function<void(const GradientCheck&)>& progress) {
  std::vector<GradientCheck> out;
  auto record = [&](const char* group, const std::string& name, double tol, GradcheckResult r) {
    out.push_back({group, name, tol, std::move(r)});
    if (progress) progress(out.back());
  };
  GradcheckOptions strict;

  using Fn = std::function<Var(const std::vector<Var>&)>;
  struct Prim {
    const char* name;
    std::vector<Shape> shapes;
    Fn f;
  };
  const Shape img{1, 3, 8, 8};
  const std::vector<Prim> prims = {
      {"conv2d", {img, {4, 3, 3, 3}, {4}}, [](auto& v) { return weighted_sum(conv2d(v[0], v[1], v[2], {1, 1})); }},
      {"conv2d_stride2", {img, {2, 3, 4, 4}, {2}},
       [](auto& v) { return weighted_sum(conv2d(v[0], v[1], v[2], {2, 1})); }},
      {"add_broadcast", {img, {1, 3, 1, 1}}, [](auto& v) { return weighted_sum(add(v[0], v[1])); }},
      {"sub", {img, img}, [](auto& v) { return weighted_sum(sub(v[0], v[1])); }},
      {"mul_broadcast", {img, {1, 1, 8, 8}}, [](auto& v) { return weighted_sum(mul(v[0], v[1])); }},
      {"leaky_relu", {img}, [](auto& v) { return weighted_sum(leaky_relu(v[0], 0.2)); }},
      {"sigmoid", {img}, [](auto& v) { return weighted_sum(sigmoid(v[0])); }},
      {"clamp", {img}, [](auto& v) { return weighted_sum(clamp(v[0], -0.5, 0.5)); }},
      {"abs", {img}, [](auto& v) { return weighted_sum(abs(v[0])); }},
      {"scale", {img}, [](auto& v) { return weighted_sum(scale(v[0], -1.7)); }},
      {"add_scalar", {img}, [](auto& v) { return weighted_sum(add_scalar(v[0], 0.3)); }},
      {"sum_dims", {img}, [](auto& v) { return weighted_sum(reduce(ReduceOp::kSum, v[0], {1, 3})); }},
      {"mean_dims", {img}, [](auto& v) { return weighted_sum(reduce(ReduceOp::kMean, v[0], {2})); }},
      {"global_avg_pool", {img}, [](auto& v) { return weighted_sum(global_avg_pool(v[0])); }},
      {"concat", {img, {1, 2, 8, 8}}, [](auto& v) { return weighted_sum(concat({v[0], v[1]}, 1)); }},
      {"narrow", {img}, [](auto& v) { return weighted_sum(narrow(v[0], 2, 3, 4)); }},
      {"reshape", {img}, [](auto& v) { return weighted_sum(reshape(v[0], {3, 64})); }},
      {"avg_downsample2x", {{1, 3, 7, 8}}, [](auto& v) { return weighted_sum(avg_downsample2x(v[0])); }},
      {"pad_reflect", {img}, [](auto& v) { return weighted_sum(pad_reflect(v[0], 1, 2, 7, 3)); }},
  };
  for (const auto& p : prims) {
    std::vector<Tensor> inputs;
    for (std::size_t i = 0; i < p.shapes.size(); ++i) inputs.push_back(random_tensor(p.shapes[i], 100 + i));
    record("primitive", p.name, strict.tolerance, gradcheck(p.f, inputs, strict));
  }

  const MVField mv = random_field(12, 20, 4, 50, 24);
  record("warp", "forward_warp", strict.tolerance,
         gradcheck([&](auto& v) { return weighted_sum(forward_warp(v[0], mv)); }, {random_tensor({1, 3, 12, 20}, 1)},
                   strict));
  record("warp", "reverse_warp", strict.tolerance,
         gradcheck([&](auto& v) { return weighted_sum(reverse_warp(v[0], mv).features); },
                   {random_tensor({1, 3, 12, 20}, 2)}, strict));

  {
    Rng rng(15);
    const GQBlockParams p = init_gq_block(4, rng, f64);
    const Var x = Var::parameter(random_tensor({2, 4, 6, 5}, 16));
    const Var plane = Var::parameter(random_tensor({1, 1, 6, 5}, 17, 0, 1));
    std::vector<std::pair<std::string, Var>> named;
    collect(p, "gq", named);
    std::vector<Var> leaves{x, plane};
    for (auto& [n, v] : named) leaves.push_back(v);
    record("gq", "gq_block", strict.tolerance,
           gradcheck_leaves([&] { return weighted_sum(gq_forward(x, plane, p)); }, leaves, strict));
  }
  {
    Rng rng(18);
    const StackParams sp = init_stack({3, 4, 2, 3}, rng, f64);
    const Var x = Var::parameter(random_tensor({1, 3, 6, 6}, 19));
    const Var plane = Var::constant(qp_plane(qp_map_from_slice(40, 6, 6, 3), 6, 6, f64));
    std::vector<std::pair<std::string, Var>> named;
    collect(sp, "s", named);
    std::vector<Var> leaves{x};
    for (auto& [n, v] : named) leaves.push_back(v);
    record("gq", "gq_stack", strict.tolerance,
           gradcheck_leaves([&] { return weighted_sum(stack_forward(x, plane, sp)); }, leaves, strict));
  }

  {
    const Var target = Var::constant(random_tensor({1, 3, 40, 44}, 50, 0, 1));
    const Tensor start = random_tensor({1, 3, 40, 44}, 51, 0, 1);
    GradcheckOptions opt;
    opt.max_elements_per_leaf = 400;
    auto check = [&](const char* name, const std::function<Var(const Var&)>& f) {
      record("loss", name, opt.tolerance, gradcheck([&](auto& v) { return f(v[0]); }, {start}, opt));
    };
    const ToyFeatureNet net = make_toy_feature_net(7, f64);
    Rng rng(52);
    const CriticParams critic = init_critic({6, 3, 4, 16, 1.0}, rng, f64);
    const Var comp = Var::constant(random_tensor({1, 3, 40, 44}, 53, 0, 1));
    const GanTerms gan{&critic, comp, net};
    check("l1", [&](const Var& o) { return l1_loss(o, target); });
    check("dog", [&](const Var& o) { return dog_loss(o, target); });
    check("dog_sum", [&](const Var& o) { return dog_loss(o, target, Reduction::kSum); });
    check("texture", [&](const Var& o) { return texture_loss(o, target, net); });
    check("wgan_generator", [&](const Var& o) { return wgan_losses(target, critic_forward(comp, o, critic)).generator; });
    check("wgan_critic", [&](const Var& o) {
      return wgan_losses(critic_forward(comp, target, critic), critic_forward(comp, o, critic)).critic;
    });
    check("regression_composite",
          [&](const Var& o) { return composite_loss(o, target, LossWeights::regression(), LossMode::kRegression).total; });
    check("gan_composite",
          [&](const Var& o) { return composite_loss(o, target, LossWeights::gan(), LossMode::kGan, &gan).total; });

    // The critic's own parameters under the Wasserstein critic loss.
    const Var fake = Var::constant(start);
    record("loss", "wgan_critic_weights", strict.tolerance,
           gradcheck_leaves(
               [&] {
                 return wgan_losses(critic_forward(comp, target, critic), critic_forward(comp, fake, critic)).critic;
               },
               critic.parameters(), strict));
  }

  {
    const ModelConfig cfg{8, 4, 2, 3, 7};
    const ModelParams p = init_model(cfg, f64);
    std::vector<Var> frames;
    for (int k = 0; k < 3; ++k) frames.push_back(Var::parameter(random_tensor({3, 16, 16}, 70 + k, 0.3, 0.7)));
    const GopMetadata meta = random_gop(16, 16, 3, 16, 71);
    std::vector<Var> leaves = p.parameters();
    leaves.insert(leaves.end(), frames.begin(), frames.end());
    GradcheckOptions opt;
    opt.tolerance = 1e-3;
    opt.max_elements_per_leaf = 6;
    record("pipeline", "tiny_pipeline", opt.tolerance, gradcheck_leaves(
                                                          [&] {
                                                            std::vector<Var> terms;
                                                            for (const auto& o : restore_gop(frames, meta, p)) {
                                                              terms.push_back(reshape(o, {1, 3, 16, 16}));
                                                            }
                                                            return weighted_sum(concat(terms, 0));
                                                          },
                                                          leaves, opt));
  }
  return out;
}

}  // namespace metabit
