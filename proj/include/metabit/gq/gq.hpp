#pragma once

#include <optional>
#include <string>
#include <vector>

#include "metabit/metadata/metadata.hpp"
#include "metabit/tensor/init.hpp"
#include "metabit/tensor/ops.hpp"

namespace metabit {

struct ConvParams {
  Var weight;  // [Cout, Cin, k, k]
  Var bias;    // [Cout]
  int padding = 0;

  Var operator()(const Var& x) const { return conv2d(x, weight, bias, {1, padding}); }
  int out_channels() const { return static_cast<int>(weight.shape()[0]); }
  int in_channels() const { return static_cast<int>(weight.shape()[1]); }
};

// Fan-in scaled uniform weights and biases, bound 1/sqrt(cin*k*k).
ConvParams init_conv(int cin, int cout, int k, Rng& rng, DType dtype = DType::kFloat32);

struct GQBlockParams {
  ConvParams conv_a, conv_b;  // 3x3 trunk, C -> C, used by both branches
  ConvParams se_reduce;       // 1x1, C -> C/4
  ConvParams se_expand;       // 1x1, C/4 -> C
  ConvParams qp_embed;        // 3x3, 1 -> C
  ConvParams qp_gate;         // 1x1, C -> C

  int channels() const { return conv_a.out_channels(); }
};

inline constexpr double kGateBiasInit = 2.0;
inline constexpr double kLeakySlope = 0.2;

GQBlockParams init_gq_block(int channels, Rng& rng, DType dtype = DType::kFloat32);

struct StackParams {
  ConvParams input;  // 3x3, Cin -> C
  std::vector<GQBlockParams> blocks;
  std::optional<ConvParams> output;  // 3x3, C -> Cout
};

struct StackShape {
  int in_channels = 3;
  int channels = 64;
  int blocks = 10;
  int out_channels = 0;  // 0: no output conv
};

// `output_scale` multiplies the output conv's initial weights and bias; a
// small value starts a residual-predicting stack near zero.
StackParams init_stack(const StackShape& shape, Rng& rng, DType dtype = DType::kFloat32,
                       double output_scale = 1.0);

// QP grid as a [1, 1, H, W] plane of qp/51, nearest-neighbour upsampled from
// the block grid (block (x / bs, y / bs) covers pixel (x, y)).
Tensor qp_plane(const QPMap& qp, int height, int width, DType dtype = DType::kFloat32);

// leaky_relu(conv3x3(plane)) -> [N, C, H, W]. `plane` is [N or 1, 1, H, W].
Var qp_embed(const Var& plane, const GQBlockParams& p);
Var qp_embed(const QPMap& qp, int height, int width, const GQBlockParams& p);

// Y = conv_b(lrelu(conv_a(x)))
// s = sigmoid(se_expand(lrelu(se_reduce(GAP(Y)))))   per channel
// G = sigmoid(qp_gate(qp_embed(plane)))               per channel and pixel
// out = x + s*Y + G*Y
// `plane` broadcasts over the batch when its leading extent is 1.
Var gq_forward(const Var& x, const Var& plane, const GQBlockParams& p);
Var gq_forward(const Var& x, const QPMap& qp, const GQBlockParams& p);

Var stack_forward(const Var& x, const Var& plane, const StackParams& sp);
Var stack_forward(const Var& x, const QPMap& qp, const StackParams& sp);

// Named learnable tensors, prefix + "." + field, in a fixed order.
void collect(const ConvParams& c, const std::string& prefix, std::vector<std::pair<std::string, Var>>& out);
void collect(const GQBlockParams& p, const std::string& prefix, std::vector<std::pair<std::string, Var>>& out);
void collect(const StackParams& sp, const std::string& prefix, std::vector<std::pair<std::string, Var>>& out);

}  // namespace metabit
