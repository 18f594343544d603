#include "metabit/gq/gq.hpp"

#include <cmath>

namespace metabit {

ConvParams init_conv(int cin, int cout, int k, Rng& rng, DType dtype) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cin) * k * k);
  ConvParams c;
  c.weight = Var::parameter(uniform({cout, cin, k, k}, bound, rng, dtype));
  c.bias = Var::parameter(uniform({cout}, bound, rng, dtype));
  c.padding = k / 2;
  return c;
}

GQBlockParams init_gq_block(int channels, Rng& rng, DType dtype) {
  if (channels < 4 || channels % 4 != 0) {
    throw ShapeError("GQ block channels must be a positive multiple of 4, got " + std::to_string(channels));
  }
  GQBlockParams p;
  p.conv_a = init_conv(channels, channels, 3, rng, dtype);
  p.conv_b = init_conv(channels, channels, 3, rng, dtype);
  p.se_reduce = init_conv(channels, channels / 4, 1, rng, dtype);
  p.se_expand = init_conv(channels / 4, channels, 1, rng, dtype);
  p.qp_embed = init_conv(1, channels, 3, rng, dtype);
  p.qp_gate = init_conv(channels, channels, 1, rng, dtype);
  p.qp_gate.bias = Var::parameter(Tensor::full({channels}, kGateBiasInit, dtype));
  return p;
}

StackParams init_stack(const StackShape& shape, Rng& rng, DType dtype, double output_scale) {
  StackParams sp;
  sp.input = init_conv(shape.in_channels, shape.channels, 3, rng, dtype);
  for (int i = 0; i < shape.blocks; ++i) sp.blocks.push_back(init_gq_block(shape.channels, rng, dtype));
  if (shape.out_channels > 0) {
    ConvParams out = init_conv(shape.channels, shape.out_channels, 3, rng, dtype);
    if (output_scale != 1.0) {
      NoGradGuard guard;
      out.weight = Var::parameter(scale(out.weight, output_scale).value());
      out.bias = Var::parameter(scale(out.bias, output_scale).value());
    }
    sp.output = std::move(out);
  }
  return sp;
}

Tensor qp_plane(const QPMap& qp, int height, int width, DType dtype) {
  if (qp.block_size <= 0 || qp.grid_w != grid_extent(width, qp.block_size) ||
      qp.grid_h != grid_extent(height, qp.block_size)) {
    throw ShapeError("QP grid " + std::to_string(qp.grid_w) + "x" + std::to_string(qp.grid_h) + " at block " +
                     std::to_string(qp.block_size) + " does not cover a " + std::to_string(width) + "x" +
                     std::to_string(height) + " feature map");
  }
  Tensor t({1, 1, height, width}, dtype);
  visit_dtype(dtype, [&](auto tag) {
    using T = decltype(tag);
    auto d = t.data<T>();
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        d[static_cast<std::size_t>(y) * width + x] =
            static_cast<T>(qp.at(x / qp.block_size, y / qp.block_size)) / T(51);
      }
    }
  });
  return t;
}

Var qp_embed(const Var& plane, const GQBlockParams& p) {
  return leaky_relu(p.qp_embed(plane), kLeakySlope);
}

Var qp_embed(const QPMap& qp, int height, int width, const GQBlockParams& p) {
  return qp_embed(Var::constant(qp_plane(qp, height, width, p.conv_a.weight.dtype())), p);
}

Var gq_forward(const Var& x, const Var& plane, const GQBlockParams& p) {
  if (x.shape().size() != 4 || x.shape()[1] != p.channels()) {
    throw ShapeError("GQ block with " + std::to_string(p.channels()) + " channels got input " +
                     to_string(x.shape()));
  }
  const Var y = p.conv_b(leaky_relu(p.conv_a(x), kLeakySlope));
  const Var s = sigmoid(p.se_expand(leaky_relu(p.se_reduce(global_avg_pool(y)), kLeakySlope)));
  const Var g = sigmoid(p.qp_gate(qp_embed(plane, p)));
  return add(add(x, mul(s, y)), mul(g, y));
}

Var gq_forward(const Var& x, const QPMap& qp, const GQBlockParams& p) {
  const auto& s = x.shape();
  if (s.size() != 4) throw ShapeError("GQ block expects [N,C,H,W], got " + to_string(s));
  return gq_forward(x, Var::constant(qp_plane(qp, static_cast<int>(s[2]), static_cast<int>(s[3]), x.dtype())), p);
}

Var stack_forward(const Var& x, const Var& plane, const StackParams& sp) {
  Var h = sp.input(x);
  for (const auto& b : sp.blocks) h = gq_forward(h, plane, b);
  if (sp.output) h = (*sp.output)(h);
  return h;
}

Var stack_forward(const Var& x, const QPMap& qp, const StackParams& sp) {
  const auto& s = x.shape();
  if (s.size() != 4) throw ShapeError("stack expects [N,C,H,W], got " + to_string(s));
  return stack_forward(x, Var::constant(qp_plane(qp, static_cast<int>(s[2]), static_cast<int>(s[3]), x.dtype())),
                       sp);
}

void collect(const ConvParams& c, const std::string& prefix, std::vector<std::pair<std::string, Var>>& out) {
  out.emplace_back(prefix + ".weight", c.weight);
  out.emplace_back(prefix + ".bias", c.bias);
}

void collect(const GQBlockParams& p, const std::string& prefix, std::vector<std::pair<std::string, Var>>& out) {
  collect(p.conv_a, prefix + ".conv_a", out);
  collect(p.conv_b, prefix + ".conv_b", out);
  collect(p.se_reduce, prefix + ".se_reduce", out);
  collect(p.se_expand, prefix + ".se_expand", out);
  collect(p.qp_embed, prefix + ".qp_embed", out);
  collect(p.qp_gate, prefix + ".qp_gate", out);
}

void collect(const StackParams& sp, const std::string& prefix, std::vector<std::pair<std::string, Var>>& out) {
  collect(sp.input, prefix + ".input", out);
  for (std::size_t i = 0; i < sp.blocks.size(); ++i) collect(sp.blocks[i], prefix + ".block" + std::to_string(i), out);
  if (sp.output) collect(*sp.output, prefix + ".output", out);
}

}  // namespace metabit
