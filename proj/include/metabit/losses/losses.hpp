#pragma once

#include <array>
#include <functional>
#include <optional>
#include <vector>

#include "metabit/gq/gq.hpp"

namespace metabit {

enum class Reduction { kMean, kSum };

// |T - O| averaged (kMean) or summed over all elements.
Var l1_loss(const Var& output, const Var& target, Reduction reduction = Reduction::kMean);

inline constexpr std::array<double, 4> kDogSigmas{1.1, 2.2, 3.3, 4.4};
inline constexpr int kDogScales = 4;  // 1, 2, 4, 8
inline constexpr int kDogMinSize = 40;

// 5x5 Gaussian on offsets -2..2, row-major. `normalize` rescales to sum 1.
std::array<double, 25> gaussian_kernel(double sigma, bool normalize = true);

// Difference-of-Gaussians scale-space loss on [N, C, H, W] images with
// H, W >= kDogMinSize. Each of the 12 bands (3 per scale) contributes the
// mean (or sum) of its absolute difference; band contributions are summed.
Var dog_loss(const Var& output, const Var& target, Reduction reduction = Reduction::kMean);

struct CriticConfig {
  int in_channels = 42;
  int layers = 8;
  int base_channels = 64;
  int max_channels = 512;
  double clip = 0.01;

  int multiple() const { return 1 << layers; }
};

struct CriticParams {
  CriticConfig config;
  std::vector<ConvParams> convs;  // 4x4, stride 2, padding 1
  ConvParams head;                // 1x1 -> 1

  std::vector<Var> parameters() const;
};

CriticParams init_critic(const CriticConfig& cfg, Rng& rng, DType dtype = DType::kFloat32);

// compressed, candidate: [N, in_channels/2, H, W] (GOP frames stacked on
// channels). Reflection-pads to a multiple of 2^layers, then strided convs,
// global average and a linear head. Returns [N] scores, higher = more real.
Var critic_forward(const Var& compressed, const Var& candidate, const CriticParams& p);

// Clamps every critic weight and bias to [-clip, clip] in place.
void clip_weights(CriticParams& p);

struct WganLosses {
  Var critic;     // mean(fake) - mean(real)
  Var generator;  // -mean(fake)
};
WganLosses wgan_losses(const Var& scores_real, const Var& scores_fake);

// Any image -> feature map extractor.
using FeatureNet = std::function<Var(const Var&)>;

// Mean absolute difference of feature maps.
Var texture_loss(const Var& output, const Var& target, const FeatureNet& net);

// Three 3x3 conv + leaky ReLU layers (3 -> 8 -> 8 -> 8) with fixed-seed
// weights; a stand-in for a pretrained texture network.
struct ToyFeatureNet {
  std::vector<ConvParams> convs;
  Var operator()(const Var& x) const;
};
ToyFeatureNet make_toy_feature_net(std::uint64_t seed = 7, DType dtype = DType::kFloat32);

struct LossWeights {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 0.0;
  double delta = 0.0;

  static LossWeights regression() { return {1.0, 1.0, 0.0, 0.0}; }
  static LossWeights gan() { return {0.01, 0.01, 0.005, 1.0}; }
  bool operator==(const LossWeights&) const = default;
};

enum class LossMode { kRegression, kGan };

struct GanTerms {
  const CriticParams* critic = nullptr;
  Var compressed;  // [B, 3*gop, H, W]
  FeatureNet feature_net;
};

struct LossBreakdown {
  Var total;
  double l1 = 0.0;
  double dog = 0.0;
  double wgan = 0.0;
  double texture = 0.0;
};

// output, target: [B*gop, 3, H, W], GOPs stored contiguously. Regression:
// alpha*L1 + beta*DoG. GAN adds gamma*(-critic score) + delta*texture. A
// missing feature net drops the texture term with a warning.
LossBreakdown composite_loss(const Var& output, const Var& target, const LossWeights& w, LossMode mode,
                             const GanTerms* gan = nullptr, Reduction dog_reduction = Reduction::kMean);

}  // namespace metabit
