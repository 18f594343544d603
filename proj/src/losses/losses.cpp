#include "metabit/losses/losses.hpp"

#include <cmath>
#include <iostream>
#include <numbers>
#include <stdexcept>

namespace metabit {

namespace {

void check_same(const Var& a, const Var& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": output " + to_string(a.shape()) + " vs target " + to_string(b.shape()));
  }
}

Var reduce_abs(const Var& x, Reduction r) { return r == Reduction::kMean ? mean(abs(x)) : sum(abs(x)); }

Tensor band_kernels(DType dtype) {
  std::array<std::array<double, 25>, 4> g;
  for (int i = 0; i < 4; ++i) g[i] = gaussian_kernel(kDogSigmas[i]);
  Tensor w({3, 1, 5, 5}, dtype);
  for (int b = 0; b < 3; ++b) {
    for (int k = 0; k < 25; ++k) w.set_item(b * 25 + k, g[b + 1][k] - g[b][k]);
  }
  return w;
}

}  // namespace

Var l1_loss(const Var& output, const Var& target, Reduction reduction) {
  check_same(output, target, "l1_loss");
  return reduce_abs(sub(target, output), reduction);
}

std::array<double, 25> gaussian_kernel(double sigma, bool normalize) {
  if (!(sigma > 0)) throw std::invalid_argument("gaussian_kernel: sigma must be positive");
  std::array<double, 25> k{};
  double total = 0.0;
  for (int i = -2; i <= 2; ++i) {
    for (int j = -2; j <= 2; ++j) {
      const double v =
          std::exp(-(i * i + j * j) / (2 * sigma * sigma)) / (2 * std::numbers::pi * sigma * sigma);
      k[(i + 2) * 5 + (j + 2)] = v;
      total += v;
    }
  }
  if (normalize) {
    for (double& v : k) v /= total;
  }
  return k;
}

Var dog_loss(const Var& output, const Var& target, Reduction reduction) {
  check_same(output, target, "dog_loss");
  const Shape& s = output.shape();
  if (s.size() != 4) throw ShapeError("dog_loss expects [N,C,H,W], got " + to_string(s));
  if (s[2] < kDogMinSize || s[3] < kDogMinSize) {
    throw ShapeError("dog_loss needs H and W of at least " + std::to_string(kDogMinSize) + ", got " +
                     std::to_string(s[2]) + "x" + std::to_string(s[3]));
  }
  // Filtering and downsampling are linear, so the bands of T - O are the
  // band differences.
  Var d = reshape(sub(target, output), {s[0] * s[1], 1, s[2], s[3]});
  const Var kernels = Var::constant(band_kernels(output.dtype()));
  Var total;
  for (int scale = 0; scale < kDogScales; ++scale) {
    if (scale > 0) d = avg_downsample2x(d);
    const Var bands = conv2d(d, kernels, Var());
    for (int b = 0; b < 3; ++b) {
      const Var term = reduce_abs(narrow(bands, 1, b, 1), reduction);
      total = total.defined() ? add(total, term) : term;
    }
  }
  return total;
}

std::vector<Var> CriticParams::parameters() const {
  std::vector<Var> out;
  for (const auto& c : convs) {
    out.push_back(c.weight);
    out.push_back(c.bias);
  }
  out.push_back(head.weight);
  out.push_back(head.bias);
  return out;
}

CriticParams init_critic(const CriticConfig& cfg, Rng& rng, DType dtype) {
  if (cfg.in_channels <= 0 || cfg.in_channels % 2 != 0) throw ShapeError("critic input channels must be even");
  CriticParams p;
  p.config = cfg;
  int cin = cfg.in_channels;
  for (int i = 0; i < cfg.layers; ++i) {
    const int cout = std::min(cfg.base_channels << std::min(i, 20), cfg.max_channels);
    ConvParams c = init_conv(cin, cout, 4, rng, dtype);
    c.padding = 1;
    p.convs.push_back(std::move(c));
    cin = cout;
  }
  p.head = init_conv(cin, 1, 1, rng, dtype);
  clip_weights(p);
  return p;
}

Var critic_forward(const Var& compressed, const Var& candidate, const CriticParams& p) {
  if (compressed.shape() != candidate.shape() || compressed.shape().size() != 4) {
    throw ShapeError("critic: compressed " + to_string(compressed.shape()) + " and candidate " +
                     to_string(candidate.shape()) + " must be equal [N,C,H,W]");
  }
  const Shape& s = compressed.shape();
  if (2 * s[1] != p.config.in_channels) {
    throw ShapeError("critic expects " + std::to_string(p.config.in_channels) + " input channels, got " +
                     std::to_string(2 * s[1]));
  }
  const std::int64_t m = p.config.multiple();
  const auto up = [m](std::int64_t v) { return (v + m - 1) / m * m; };
  Var x = concat({compressed, candidate}, 1);
  if (up(s[2]) != s[2] || up(s[3]) != s[3]) {
    x = pad_reflect(x, 0, static_cast<int>(up(s[2]) - s[2]), 0, static_cast<int>(up(s[3]) - s[3]));
  }
  for (const auto& c : p.convs) x = leaky_relu(conv2d(x, c.weight, c.bias, {2, 1}), kLeakySlope);
  return reshape(p.head(global_avg_pool(x)), {s[0]});
}

void clip_weights(CriticParams& p) {
  const double c = p.config.clip;
  for (Var& v : p.parameters()) {
    Tensor t = v.value();
    visit_dtype(t.dtype(), [&](auto tag) {
      using T = decltype(tag);
      for (T& x : t.data<T>()) x = std::clamp(x, static_cast<T>(-c), static_cast<T>(c));
    });
    v.assign(std::move(t));
  }
}

WganLosses wgan_losses(const Var& scores_real, const Var& scores_fake) {
  return {sub(mean(scores_fake), mean(scores_real)), scale(mean(scores_fake), -1.0)};
}

Var texture_loss(const Var& output, const Var& target, const FeatureNet& net) {
  check_same(output, target, "texture_loss");
  if (!net) throw std::invalid_argument("texture_loss: no feature network");
  return mean(abs(sub(net(target), net(output))));
}

Var ToyFeatureNet::operator()(const Var& x) const {
  Var h = x;
  for (const auto& c : convs) h = leaky_relu(c(h), kLeakySlope);
  return h;
}

ToyFeatureNet make_toy_feature_net(std::uint64_t seed, DType dtype) {
  Rng rng(seed);
  ToyFeatureNet net;
  int cin = 3;
  for (int i = 0; i < 3; ++i) {
    ConvParams c = init_conv(cin, 8, 3, rng, dtype);
    c.weight = Var::constant(c.weight.value());
    c.bias = Var::constant(c.bias.value());
    net.convs.push_back(std::move(c));
    cin = 8;
  }
  return net;
}

LossBreakdown composite_loss(const Var& output, const Var& target, const LossWeights& w, LossMode mode,
                             const GanTerms* gan, Reduction dog_reduction) {
  LossBreakdown r;
  const Var l1 = l1_loss(output, target);
  const Var dog = dog_loss(output, target, dog_reduction);
  r.l1 = l1.value().item();
  r.dog = dog.value().item();
  r.total = add(scale(l1, w.alpha), scale(dog, w.beta));
  if (mode == LossMode::kRegression) return r;

  if (gan == nullptr || gan->critic == nullptr) throw std::invalid_argument("GAN loss needs a critic");
  if (w.gamma != 0.0) {
    const Shape& c = gan->compressed.shape();
    const Shape& o = output.shape();
    if (c.size() != 4 || o.size() != 4 || c[1] % 3 != 0 || o[0] != c[0] * (c[1] / 3) || o[2] != c[2] ||
        o[3] != c[3]) {
      throw ShapeError("GAN loss: output " + to_string(o) + " does not match compressed GOP stack " + to_string(c));
    }
    const Var candidate = reshape(output, {c[0], c[1], c[2], c[3]});
    const Var adv = wgan_losses(Var::constant(Tensor::zeros({1}, output.dtype())),
                                critic_forward(gan->compressed, candidate, *gan->critic))
                        .generator;
    r.wgan = adv.value().item();
    r.total = add(r.total, scale(adv, w.gamma));
  }
  if (w.delta != 0.0) {
    if (!gan->feature_net) {
      static bool warned = false;
      if (!warned) std::cerr << "warning: no texture feature network; texture term skipped (delta treated as 0)\n";
      warned = true;
    } else {
      const Var tex = texture_loss(output, target, gan->feature_net);
      r.texture = tex.value().item();
      r.total = add(r.total, scale(tex, w.delta));
    }
  }
  return r;
}

}  // namespace metabit
