#include <algorithm>
#include <string>

#include "metabit/tensor/ops.hpp"

namespace metabit {

namespace {

struct ConvGeometry {
  std::int64_t n, cin, h, w, cout, kh, kw, oh, ow;
  int stride, pad;

  // Output columns [lo, hi) whose input column ox*stride + kx - pad is in range.
  std::pair<std::int64_t, std::int64_t> valid_cols(std::int64_t kx) const {
    std::int64_t lo = 0;
    while (lo < ow && lo * stride + kx - pad < 0) ++lo;
    std::int64_t hi = ow;
    while (hi > lo && (hi - 1) * stride + kx - pad >= w) --hi;
    return {lo, hi};
  }
};

template <typename T>
void conv_forward(const ConvGeometry& g, const T* in, const T* wt, const T* bias, T* out) {
  const std::int64_t plane_in = g.h * g.w, plane_out = g.oh * g.ow;
  for (std::int64_t b = 0; b < g.n; ++b) {
    for (std::int64_t co = 0; co < g.cout; ++co) {
      T* op = out + (b * g.cout + co) * plane_out;
      std::fill(op, op + plane_out, bias ? bias[co] : T(0));
      for (std::int64_t ci = 0; ci < g.cin; ++ci) {
        const T* ip = in + (b * g.cin + ci) * plane_in;
        const T* wp = wt + (co * g.cin + ci) * g.kh * g.kw;
        for (std::int64_t ky = 0; ky < g.kh; ++ky) {
          for (std::int64_t kx = 0; kx < g.kw; ++kx) {
            const T k = wp[ky * g.kw + kx];
            const auto [lo, hi] = g.valid_cols(kx);
            for (std::int64_t oy = 0; oy < g.oh; ++oy) {
              const std::int64_t iy = oy * g.stride + ky - g.pad;
              if (iy < 0 || iy >= g.h) continue;
              const T* row = ip + iy * g.w + kx - g.pad;
              T* orow = op + oy * g.ow;
              if (g.stride == 1) {
                for (std::int64_t ox = lo; ox < hi; ++ox) orow[ox] += k * row[ox];
              } else {
                for (std::int64_t ox = lo; ox < hi; ++ox) orow[ox] += k * row[ox * g.stride];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv_backward_input(const ConvGeometry& g, const T* gout, const T* wt, T* gin) {
  const std::int64_t plane_in = g.h * g.w, plane_out = g.oh * g.ow;
  for (std::int64_t b = 0; b < g.n; ++b) {
    for (std::int64_t ci = 0; ci < g.cin; ++ci) {
      T* ip = gin + (b * g.cin + ci) * plane_in;
      for (std::int64_t co = 0; co < g.cout; ++co) {
        const T* gp = gout + (b * g.cout + co) * plane_out;
        const T* wp = wt + (co * g.cin + ci) * g.kh * g.kw;
        for (std::int64_t ky = 0; ky < g.kh; ++ky) {
          for (std::int64_t kx = 0; kx < g.kw; ++kx) {
            const T k = wp[ky * g.kw + kx];
            const auto [lo, hi] = g.valid_cols(kx);
            for (std::int64_t oy = 0; oy < g.oh; ++oy) {
              const std::int64_t iy = oy * g.stride + ky - g.pad;
              if (iy < 0 || iy >= g.h) continue;
              T* row = ip + iy * g.w + kx - g.pad;
              const T* grow = gp + oy * g.ow;
              if (g.stride == 1) {
                for (std::int64_t ox = lo; ox < hi; ++ox) row[ox] += k * grow[ox];
              } else {
                for (std::int64_t ox = lo; ox < hi; ++ox) row[ox * g.stride] += k * grow[ox];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv_backward_weight(const ConvGeometry& g, const T* gout, const T* in, T* gw, T* gb) {
  const std::int64_t plane_in = g.h * g.w, plane_out = g.oh * g.ow;
  for (std::int64_t co = 0; co < g.cout; ++co) {
    if (gb) {
      T acc = 0;
      for (std::int64_t b = 0; b < g.n; ++b) {
        const T* gp = gout + (b * g.cout + co) * plane_out;
        for (std::int64_t i = 0; i < plane_out; ++i) acc += gp[i];
      }
      gb[co] = acc;
    }
    for (std::int64_t ci = 0; ci < g.cin; ++ci) {
      T* wp = gw + (co * g.cin + ci) * g.kh * g.kw;
      for (std::int64_t ky = 0; ky < g.kh; ++ky) {
        for (std::int64_t kx = 0; kx < g.kw; ++kx) {
          const auto [lo, hi] = g.valid_cols(kx);
          T acc = 0;
          for (std::int64_t b = 0; b < g.n; ++b) {
            const T* gp = gout + (b * g.cout + co) * plane_out;
            const T* ip = in + (b * g.cin + ci) * plane_in;
            for (std::int64_t oy = 0; oy < g.oh; ++oy) {
              const std::int64_t iy = oy * g.stride + ky - g.pad;
              if (iy < 0 || iy >= g.h) continue;
              const T* row = ip + iy * g.w + kx - g.pad;
              const T* grow = gp + oy * g.ow;
              if (g.stride == 1) {
                for (std::int64_t ox = lo; ox < hi; ++ox) acc += grow[ox] * row[ox];
              } else {
                for (std::int64_t ox = lo; ox < hi; ++ox) acc += grow[ox] * row[ox * g.stride];
              }
            }
          }
          wp[ky * g.kw + kx] = acc;
        }
      }
    }
  }
}

}  // namespace

Var conv2d(const Var& input, const Var& weight, const Var& bias, Conv2dOptions options) {
  const Shape& is = input.shape();
  const Shape& ws = weight.shape();
  if (is.size() != 4 || ws.size() != 4) {
    throw ShapeError("conv2d expects input [N,C,H,W] and weight [Co,Ci,kh,kw], got " +
                     to_string(is) + " and " + to_string(ws));
  }
  if (is[1] != ws[1]) {
    throw ShapeError("conv2d: input has " + std::to_string(is[1]) + " channels, weight expects " +
                     std::to_string(ws[1]));
  }
  if (options.stride < 1 || options.padding < 0) throw ShapeError("conv2d: bad stride/padding");
  if (input.dtype() != weight.dtype()) throw ShapeError("conv2d: mixed dtypes");
  if (bias.defined() && (bias.shape() != Shape{ws[0]} || bias.dtype() != weight.dtype())) {
    throw ShapeError("conv2d: bias must have shape [" + std::to_string(ws[0]) + "], got " +
                     to_string(bias.shape()));
  }
  ConvGeometry g{};
  g.n = is[0];
  g.cin = is[1];
  g.h = is[2];
  g.w = is[3];
  g.cout = ws[0];
  g.kh = ws[2];
  g.kw = ws[3];
  g.stride = options.stride;
  g.pad = options.padding;
  if (g.kh > g.h + 2 * g.pad || g.kw > g.w + 2 * g.pad) {
    throw ShapeError("conv2d: kernel " + to_string(ws) + " larger than padded input " + to_string(is));
  }
  g.oh = (g.h + 2 * g.pad - g.kh) / g.stride + 1;
  g.ow = (g.w + 2 * g.pad - g.kw) / g.stride + 1;

  Tensor out({g.n, g.cout, g.oh, g.ow}, input.dtype());
  visit_dtype(input.dtype(), [&](auto tag) {
    using T = decltype(tag);
    conv_forward<T>(g, input.value().data<T>().data(), weight.value().data<T>().data(),
                    bias.defined() ? bias.value().data<T>().data() : nullptr, out.data<T>().data());
  });

  std::vector<Var> inputs{input, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_op("conv2d", std::move(out), std::move(inputs), [g](const BackwardArgs& args) {
    std::vector<Tensor> grads(args.inputs.size());
    const Tensor& gout = args.grad_output;
    visit_dtype(gout.dtype(), [&](auto tag) {
      using T = decltype(tag);
      const T* gp = gout.data<T>().data();
      if (args.needs(0)) {
        grads[0] = Tensor::zeros(args.inputs[0].shape(), gout.dtype());
        conv_backward_input<T>(g, gp, args.inputs[1].value().template data<T>().data(),
                               grads[0].template data<T>().data());
      }
      const bool want_bias = args.inputs.size() > 2 && args.needs(2);
      if (args.needs(1) || want_bias) {
        Tensor gw = Tensor::zeros(args.inputs[1].shape(), gout.dtype());
        Tensor gb = want_bias ? Tensor::zeros(args.inputs[2].shape(), gout.dtype()) : Tensor();
        conv_backward_weight<T>(g, gp, args.inputs[0].value().template data<T>().data(),
                                gw.template data<T>().data(),
                                want_bias ? gb.template data<T>().data() : nullptr);
        if (args.needs(1)) grads[1] = std::move(gw);
        if (want_bias) grads[2] = std::move(gb);
      }
    });
    return grads;
  });
}

}  // namespace metabit
