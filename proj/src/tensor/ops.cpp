#include "metabit/tensor/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace metabit {

namespace {

void require_same_dtype(const Var& a, const Var& b, const char* op) {
  if (a.dtype() != b.dtype()) throw ShapeError(std::string(op) + ": mixed dtypes");
}

std::vector<std::int64_t> contiguous_strides(const Shape& shape) {
  std::vector<std::int64_t> strides(shape.size(), 1);
  for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i) {
    strides[static_cast<std::size_t>(i)] =
        strides[static_cast<std::size_t>(i) + 1] * shape[static_cast<std::size_t>(i) + 1];
  }
  return strides;
}

// Strides of `src` expressed over the dims of `out`; broadcast dims get 0.
std::vector<std::int64_t> broadcast_strides(const Shape& src, const Shape& out) {
  auto strides = contiguous_strides(src);
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i] == 1 && out[i] != 1) strides[i] = 0;
  }
  return strides;
}

// Calls f(out_index, a_index, b_index) for every element of `out`.
template <typename F>
void for_each_broadcast(const Shape& out, const Shape& sa, const Shape& sb, F&& f) {
  const std::int64_t n = shape_numel(out);
  if (sa == out && sb == out) {
    for (std::int64_t i = 0; i < n; ++i) f(i, i, i);
    return;
  }
  const auto stride_a = broadcast_strides(sa, out);
  const auto stride_b = broadcast_strides(sb, out);
  const std::size_t rank = out.size();
  std::vector<std::int64_t> idx(rank, 0);
  std::int64_t ia = 0, ib = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    f(i, ia, ib);
    for (int d = static_cast<int>(rank) - 1; d >= 0; --d) {
      auto ud = static_cast<std::size_t>(d);
      ++idx[ud];
      ia += stride_a[ud];
      ib += stride_b[ud];
      if (idx[ud] < out[ud]) break;
      ia -= stride_a[ud] * out[ud];
      ib -= stride_b[ud] * out[ud];
      idx[ud] = 0;
    }
  }
}

// Sums `grad` (shaped like the broadcast output) down to `target`.
Tensor sum_to_shape(const Tensor& grad, const Shape& target) {
  if (grad.shape() == target) return grad;
  Tensor out = Tensor::zeros(target, grad.dtype());
  visit_dtype(grad.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto g = grad.data<T>();
    auto o = out.data<T>();
    for_each_broadcast(grad.shape(), target, target,
                       [&](std::int64_t i, std::int64_t it, std::int64_t) { o[it] += g[i]; });
  });
  return out;
}

template <typename F>
Tensor map_unary(const Tensor& x, F&& f) {
  Tensor out(x.shape(), x.dtype());
  visit_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto in = x.data<T>();
    auto o = out.data<T>();
    for (std::size_t i = 0; i < in.size(); ++i) o[i] = static_cast<T>(f(in[i]));
  });
  return out;
}

// grad_in[i] = grad_out[i] * f(x[i], y[i]) where y is the op output.
template <typename F>
Tensor chain_unary(const Tensor& grad, const Tensor& x, const Tensor& y, F&& f) {
  Tensor out(x.shape(), x.dtype());
  visit_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto g = grad.data<T>();
    auto xv = x.data<T>();
    auto yv = y.data<T>();
    auto o = out.data<T>();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = static_cast<T>(g[i] * f(xv[i], yv[i]));
  });
  return out;
}

Var binary(ElementwiseOp op, const Var& a, const Var& b) {
  require_same_dtype(a, b, "elementwise");
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  Tensor out(out_shape, a.dtype());
  visit_dtype(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto av = a.value().data<T>();
    auto bv = b.value().data<T>();
    auto o = out.data<T>();
    switch (op) {
      case ElementwiseOp::kAdd:
        for_each_broadcast(out_shape, a.shape(), b.shape(),
                           [&](auto i, auto ia, auto ib) { o[i] = av[ia] + bv[ib]; });
        break;
      case ElementwiseOp::kSub:
        for_each_broadcast(out_shape, a.shape(), b.shape(),
                           [&](auto i, auto ia, auto ib) { o[i] = av[ia] - bv[ib]; });
        break;
      default:
        for_each_broadcast(out_shape, a.shape(), b.shape(),
                           [&](auto i, auto ia, auto ib) { o[i] = av[ia] * bv[ib]; });
        break;
    }
  });
  const char* name = op == ElementwiseOp::kAdd ? "add" : op == ElementwiseOp::kSub ? "sub" : "mul";
  return make_op(name, std::move(out), {a, b}, [op](const BackwardArgs& args) {
    const Tensor& g = args.grad_output;
    const Tensor& av = args.inputs[0].value();
    const Tensor& bv = args.inputs[1].value();
    std::vector<Tensor> grads(2);
    if (op == ElementwiseOp::kMul) {
      // d(a*b)/da = b broadcast to the output, then summed back.
      auto product_with = [&](const Tensor& other) {
        Tensor t(g.shape(), g.dtype());
        visit_dtype(g.dtype(), [&](auto tag) {
          using T = decltype(tag);
          auto gv = g.data<T>();
          auto ov = other.data<T>();
          auto tv = t.data<T>();
          for_each_broadcast(g.shape(), other.shape(), other.shape(),
                             [&](auto i, auto io, auto) { tv[i] = gv[i] * ov[io]; });
        });
        return t;
      };
      if (args.needs(0)) grads[0] = sum_to_shape(product_with(bv), av.shape());
      if (args.needs(1)) grads[1] = sum_to_shape(product_with(av), bv.shape());
      return grads;
    }
    if (args.needs(0)) grads[0] = sum_to_shape(g, av.shape());
    if (args.needs(1)) {
      grads[1] = sum_to_shape(g, bv.shape());
      if (op == ElementwiseOp::kSub) grads[1] = map_unary(grads[1], [](auto v) { return -v; });
    }
    return grads;
  });
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  if (a.size() != b.size()) {
    throw ShapeError("rank mismatch: " + to_string(a) + " vs " + to_string(b));
  }
  Shape out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i] || b[i] == 1) {
      out[i] = a[i];
    } else if (a[i] == 1) {
      out[i] = b[i];
    } else {
      throw ShapeError("incompatible shapes " + to_string(a) + " and " + to_string(b));
    }
  }
  return out;
}

Var elementwise(ElementwiseOp op, const Var& a, const Var& b, ElementwiseParams params) {
  switch (op) {
    case ElementwiseOp::kAdd:
    case ElementwiseOp::kSub:
    case ElementwiseOp::kMul:
      if (!b.defined()) throw ShapeError("binary elementwise op needs two operands");
      return binary(op, a, b);
    case ElementwiseOp::kLeakyRelu:
      return leaky_relu(a, params.slope);
    case ElementwiseOp::kSigmoid:
      return sigmoid(a);
    case ElementwiseOp::kClamp:
      return clamp(a, params.lo, params.hi);
  }
  throw std::logic_error("unknown elementwise op");
}

Var add(const Var& a, const Var& b) { return binary(ElementwiseOp::kAdd, a, b); }
Var sub(const Var& a, const Var& b) { return binary(ElementwiseOp::kSub, a, b); }
Var mul(const Var& a, const Var& b) { return binary(ElementwiseOp::kMul, a, b); }

Var leaky_relu(const Var& x, double slope) {
  Tensor out = map_unary(x.value(), [slope](auto v) { return v > 0 ? v : v * slope; });
  return make_op("leaky_relu", std::move(out), {x}, [slope](const BackwardArgs& args) {
    return std::vector<Tensor>{chain_unary(args.grad_output, args.inputs[0].value(), args.output,
                                           [slope](auto v, auto) { return v > 0 ? 1.0 : slope; })};
  });
}

Var sigmoid(const Var& x) {
  Tensor out = map_unary(x.value(), [](auto v) {
    using T = decltype(v);
    if (v >= 0) return T(1) / (T(1) + std::exp(-v));
    const T e = std::exp(v);
    return e / (T(1) + e);
  });
  return make_op("sigmoid", std::move(out), {x}, [](const BackwardArgs& args) {
    return std::vector<Tensor>{chain_unary(args.grad_output, args.inputs[0].value(), args.output,
                                           [](auto, auto y) { return y * (1 - y); })};
  });
}

Var clamp(const Var& x, double lo, double hi) {
  Tensor out = map_unary(x.value(), [lo, hi](auto v) {
    using T = decltype(v);
    return std::clamp(v, static_cast<T>(lo), static_cast<T>(hi));
  });
  return make_op("clamp", std::move(out), {x}, [lo, hi](const BackwardArgs& args) {
    return std::vector<Tensor>{
        chain_unary(args.grad_output, args.inputs[0].value(), args.output,
                    [lo, hi](auto v, auto) { return (v >= lo && v <= hi) ? 1.0 : 0.0; })};
  });
}

Var abs(const Var& x) {
  Tensor out = map_unary(x.value(), [](auto v) { return std::abs(v); });
  return make_op("abs", std::move(out), {x}, [](const BackwardArgs& args) {
    return std::vector<Tensor>{
        chain_unary(args.grad_output, args.inputs[0].value(), args.output,
                    [](auto v, auto) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); })};
  });
}

Var scale(const Var& x, double factor) {
  Tensor out = map_unary(x.value(), [factor](auto v) { return v * factor; });
  return make_op("scale", std::move(out), {x}, [factor](const BackwardArgs& args) {
    return std::vector<Tensor>{map_unary(args.grad_output, [factor](auto g) { return g * factor; })};
  });
}

Var add_scalar(const Var& x, double value) {
  Tensor out = map_unary(x.value(), [value](auto v) { return v + value; });
  return make_op("add_scalar", std::move(out), {x},
                 [](const BackwardArgs& args) { return std::vector<Tensor>{args.grad_output}; });
}

Var reduce(ReduceOp op, const Var& input, const std::vector<int>& dims_in) {
  const Shape& in_shape = input.shape();
  const int rank = static_cast<int>(in_shape.size());
  std::vector<int> dims;
  if (op == ReduceOp::kGlobalAvgPool) {
    if (rank < 3) throw ShapeError("global_avg_pool needs [N,C,...], got " + to_string(in_shape));
    for (int d = 2; d < rank; ++d) dims.push_back(d);
  } else {
    if (dims_in.empty()) throw ShapeError("reduce: empty dimension list");
    for (int d : dims_in) {
      const int dd = d < 0 ? d + rank : d;
      if (dd < 0 || dd >= rank) {
        throw ShapeError("reduce: dim " + std::to_string(d) + " invalid for " + to_string(in_shape));
      }
      dims.push_back(dd);
    }
    std::sort(dims.begin(), dims.end());
    dims.erase(std::unique(dims.begin(), dims.end()), dims.end());
  }

  // Reduce into a same-rank "kept" shape first, then drop dims if required.
  Shape kept = in_shape;
  std::int64_t count = 1;
  for (int d : dims) {
    count *= in_shape[static_cast<std::size_t>(d)];
    kept[static_cast<std::size_t>(d)] = 1;
  }
  Tensor reduced = Tensor::zeros(kept, input.dtype());
  const bool average = op != ReduceOp::kSum;
  visit_dtype(input.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto in = input.value().data<T>();
    auto o = reduced.data<T>();
    for_each_broadcast(in_shape, kept, kept, [&](auto i, auto io, auto) { o[io] += in[i]; });
    if (average) {
      for (auto& v : o) v /= static_cast<T>(count);
    }
  });

  Shape out_shape;
  if (op == ReduceOp::kGlobalAvgPool) {
    out_shape = kept;
  } else {
    for (int d = 0; d < rank; ++d) {
      if (std::find(dims.begin(), dims.end(), d) == dims.end()) {
        out_shape.push_back(in_shape[static_cast<std::size_t>(d)]);
      }
    }
  }
  Tensor out = reduced.reshaped(out_shape);
  const char* name = op == ReduceOp::kSum ? "sum" : op == ReduceOp::kMean ? "mean" : "gap";
  return make_op(name, std::move(out), {input}, [kept, count, average](const BackwardArgs& args) {
    const Tensor g = args.grad_output.reshaped(kept);
    const Shape& in_shape = args.inputs[0].shape();
    Tensor gin(in_shape, g.dtype());
    visit_dtype(g.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto gv = g.data<T>();
      auto o = gin.data<T>();
      const T factor = average ? T(1) / static_cast<T>(count) : T(1);
      for_each_broadcast(in_shape, kept, kept, [&](auto i, auto ig, auto) { o[i] = gv[ig] * factor; });
    });
    return std::vector<Tensor>{std::move(gin)};
  });
}

Var sum(const Var& x) {
  std::vector<int> dims(x.shape().size());
  std::iota(dims.begin(), dims.end(), 0);
  if (dims.empty()) return x;
  return reduce(ReduceOp::kSum, x, dims);
}

Var mean(const Var& x) {
  std::vector<int> dims(x.shape().size());
  std::iota(dims.begin(), dims.end(), 0);
  if (dims.empty()) return x;
  return reduce(ReduceOp::kMean, x, dims);
}

Var global_avg_pool(const Var& x) { return reduce(ReduceOp::kGlobalAvgPool, x, {}); }

Var concat(const std::vector<Var>& inputs, int dim) {
  if (inputs.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = inputs[0].shape();
  const int rank = static_cast<int>(first.size());
  if (dim < 0) dim += rank;
  if (dim < 0 || dim >= rank) throw ShapeError("concat: bad dim for " + to_string(first));
  if (inputs.size() == 1) return inputs[0];
  const auto udim = static_cast<std::size_t>(dim);
  Shape out_shape = first;
  out_shape[udim] = 0;
  for (const auto& in : inputs) {
    const Shape& s = in.shape();
    bool ok = s.size() == first.size() && in.dtype() == inputs[0].dtype();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == udim || s[d] == first[d];
    if (!ok) throw ShapeError("concat: " + to_string(s) + " incompatible with " + to_string(first));
    out_shape[udim] += s[udim];
  }
  std::int64_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < udim; ++d) outer *= first[d];
  for (std::size_t d = udim + 1; d < first.size(); ++d) inner *= first[d];

  Tensor out(out_shape, inputs[0].dtype());
  visit_dtype(out.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto o = out.data<T>();
    std::int64_t offset = 0;
    const std::int64_t out_row = out_shape[udim] * inner;
    for (const auto& in : inputs) {
      auto iv = in.value().data<T>();
      const std::int64_t row = in.shape()[udim] * inner;
      for (std::int64_t k = 0; k < outer; ++k) {
        std::copy_n(iv.begin() + k * row, row, o.begin() + k * out_row + offset);
      }
      offset += row;
    }
  });
  return make_op("concat", std::move(out), inputs, [udim, outer, inner](const BackwardArgs& args) {
    std::vector<Tensor> grads(args.inputs.size());
    visit_dtype(args.grad_output.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto g = args.grad_output.data<T>();
      const std::int64_t out_row = args.grad_output.shape()[udim] * inner;
      std::int64_t offset = 0;
      for (std::size_t i = 0; i < args.inputs.size(); ++i) {
        const Shape& s = args.inputs[i].shape();
        const std::int64_t row = s[udim] * inner;
        if (args.needs(i)) {
          grads[i] = Tensor(s, args.grad_output.dtype());
          auto gi = grads[i].template data<T>();
          for (std::int64_t k = 0; k < outer; ++k) {
            std::copy_n(g.begin() + k * out_row + offset, row, gi.begin() + k * row);
          }
        }
        offset += row;
      }
    });
    return grads;
  });
}

Var narrow(const Var& x, int dim, std::int64_t start, std::int64_t length) {
  const Shape& s = x.shape();
  const int rank = static_cast<int>(s.size());
  if (dim < 0) dim += rank;
  if (dim < 0 || dim >= rank) throw ShapeError("narrow: bad dim for " + to_string(s));
  const auto udim = static_cast<std::size_t>(dim);
  if (start < 0 || length < 1 || start + length > s[udim]) {
    throw ShapeError("narrow: range [" + std::to_string(start) + "," +
                     std::to_string(start + length) + ") outside " + to_string(s));
  }
  std::int64_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < udim; ++d) outer *= s[d];
  for (std::size_t d = udim + 1; d < s.size(); ++d) inner *= s[d];
  Shape out_shape = s;
  out_shape[udim] = length;
  Tensor out(out_shape, x.dtype());
  const std::int64_t in_row = s[udim] * inner, out_row = length * inner;
  visit_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto iv = x.value().data<T>();
    auto o = out.data<T>();
    for (std::int64_t k = 0; k < outer; ++k) {
      std::copy_n(iv.begin() + k * in_row + start * inner, out_row, o.begin() + k * out_row);
    }
  });
  return make_op("narrow", std::move(out), {x}, [=](const BackwardArgs& args) {
    Tensor gin = Tensor::zeros(args.inputs[0].shape(), args.grad_output.dtype());
    visit_dtype(gin.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto g = args.grad_output.data<T>();
      auto o = gin.data<T>();
      for (std::int64_t k = 0; k < outer; ++k) {
        std::copy_n(g.begin() + k * out_row, out_row, o.begin() + k * in_row + start * inner);
      }
    });
    return std::vector<Tensor>{std::move(gin)};
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make_op("reshape", std::move(out), {x}, [](const BackwardArgs& args) {
    return std::vector<Tensor>{args.grad_output.reshaped(args.inputs[0].shape())};
  });
}

Var avg_downsample2x(const Var& x) {
  const Shape& s = x.shape();
  if (s.size() < 2) throw ShapeError("avg_downsample2x needs at least 2 dims");
  const std::int64_t h = s[s.size() - 2], w = s[s.size() - 1];
  if (h < 2 || w < 2) throw ShapeError("avg_downsample2x needs H,W >= 2, got " + to_string(s));
  const std::int64_t oh = (h + 1) / 2, ow = (w + 1) / 2;
  const std::int64_t planes = shape_numel(s) / (h * w);
  Shape out_shape = s;
  out_shape[s.size() - 2] = oh;
  out_shape[s.size() - 1] = ow;
  Tensor out(out_shape, x.dtype());
  visit_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto iv = x.value().data<T>();
    auto o = out.data<T>();
    for (std::int64_t p = 0; p < planes; ++p) {
      const T* ip = iv.data() + p * h * w;
      T* op = o.data() + p * oh * ow;
      for (std::int64_t oy = 0; oy < oh; ++oy) {
        const std::int64_t y1 = std::min(2 * oy + 1, h - 1);
        for (std::int64_t ox = 0; ox < ow; ++ox) {
          const std::int64_t x1 = std::min(2 * ox + 1, w - 1);
          T acc = 0;
          int n = 0;
          for (std::int64_t yy = 2 * oy; yy <= y1; ++yy) {
            for (std::int64_t xx = 2 * ox; xx <= x1; ++xx) {
              acc += ip[yy * w + xx];
              ++n;
            }
          }
          op[oy * ow + ox] = acc / static_cast<T>(n);
        }
      }
    }
  });
  return make_op("avg_downsample2x", std::move(out), {x}, [=](const BackwardArgs& args) {
    Tensor gin = Tensor::zeros(args.inputs[0].shape(), args.grad_output.dtype());
    visit_dtype(gin.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto g = args.grad_output.data<T>();
      auto o = gin.data<T>();
      for (std::int64_t p = 0; p < planes; ++p) {
        const T* gp = g.data() + p * oh * ow;
        T* ip = o.data() + p * h * w;
        for (std::int64_t oy = 0; oy < oh; ++oy) {
          const std::int64_t y1 = std::min(2 * oy + 1, h - 1);
          for (std::int64_t ox = 0; ox < ow; ++ox) {
            const std::int64_t x1 = std::min(2 * ox + 1, w - 1);
            const T n = static_cast<T>((y1 - 2 * oy + 1) * (x1 - 2 * ox + 1));
            const T share = gp[oy * ow + ox] / n;
            for (std::int64_t yy = 2 * oy; yy <= y1; ++yy) {
              for (std::int64_t xx = 2 * ox; xx <= x1; ++xx) ip[yy * w + xx] += share;
            }
          }
        }
      }
    });
    return std::vector<Tensor>{std::move(gin)};
  });
}

namespace {

std::int64_t reflect_index(std::int64_t i, std::int64_t n) {
  if (n == 1) return 0;
  const std::int64_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

Var pad_reflect(const Var& x, int top, int bottom, int left, int right) {
  const Shape& s = x.shape();
  if (s.size() < 2) throw ShapeError("pad_reflect needs at least 2 dims");
  if (top < 0 || bottom < 0 || left < 0 || right < 0) throw ShapeError("pad_reflect: negative pad");
  const std::int64_t h = s[s.size() - 2], w = s[s.size() - 1];
  const std::int64_t oh = h + top + bottom, ow = w + left + right;
  const std::int64_t planes = shape_numel(s) / (h * w);
  Shape out_shape = s;
  out_shape[s.size() - 2] = oh;
  out_shape[s.size() - 1] = ow;
  std::vector<std::int64_t> src(static_cast<std::size_t>(oh * ow));
  for (std::int64_t y = 0; y < oh; ++y) {
    for (std::int64_t xx = 0; xx < ow; ++xx) {
      src[static_cast<std::size_t>(y * ow + xx)] =
          reflect_index(y - top, h) * w + reflect_index(xx - left, w);
    }
  }
  Tensor out(out_shape, x.dtype());
  visit_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto iv = x.value().data<T>();
    auto o = out.data<T>();
    for (std::int64_t p = 0; p < planes; ++p) {
      for (std::size_t k = 0; k < src.size(); ++k) {
        o[static_cast<std::size_t>(p * oh * ow) + k] = iv[static_cast<std::size_t>(p * h * w + src[k])];
      }
    }
  });
  return make_op("pad_reflect", std::move(out), {x}, [src = std::move(src), planes, h, w, oh, ow](
                                                          const BackwardArgs& args) {
    Tensor gin = Tensor::zeros(args.inputs[0].shape(), args.grad_output.dtype());
    visit_dtype(gin.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto g = args.grad_output.data<T>();
      auto o = gin.data<T>();
      for (std::int64_t p = 0; p < planes; ++p) {
        for (std::size_t k = 0; k < src.size(); ++k) {
          o[static_cast<std::size_t>(p * h * w + src[k])] += g[static_cast<std::size_t>(p * oh * ow) + k];
        }
      }
    });
    return std::vector<Tensor>{std::move(gin)};
  });
}

}  // namespace metabit
