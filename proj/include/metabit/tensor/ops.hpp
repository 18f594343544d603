#pragma once

#include <optional>
#include <vector>

#include "metabit/tensor/autograd.hpp"

namespace metabit {

struct Conv2dOptions {
  int stride = 1;
  int padding = 0;
};

// Zero-padded cross-correlation. input [N,Cin,H,W], weight [Cout,Cin,kh,kw],
// bias [Cout] or undefined.
Var conv2d(const Var& input, const Var& weight, const Var& bias, Conv2dOptions options = {});

enum class ElementwiseOp { kAdd, kSub, kMul, kLeakyRelu, kSigmoid, kClamp };

struct ElementwiseParams {
  double slope = 0.2;
  double lo = 0.0;
  double hi = 1.0;
};

// Binary ops broadcast along dimensions where one operand has extent 1;
// both operands must have the same rank.
Var elementwise(ElementwiseOp op, const Var& a, const Var& b = {}, ElementwiseParams params = {});

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var leaky_relu(const Var& x, double slope = 0.2);
Var sigmoid(const Var& x);
// Gradient passes through inside [lo, hi] and is zero outside.
Var clamp(const Var& x, double lo, double hi);
Var abs(const Var& x);
Var scale(const Var& x, double factor);
Var add_scalar(const Var& x, double value);

enum class ReduceOp { kSum, kMean, kGlobalAvgPool };

// kSum/kMean drop the reduced dims; kGlobalAvgPool averages dims 2.. of an
// [N,C,...] tensor and keeps them with extent 1 (dims is ignored).
Var reduce(ReduceOp op, const Var& input, const std::vector<int>& dims);
Var sum(const Var& x);  // all elements -> scalar
Var mean(const Var& x);
Var global_avg_pool(const Var& x);

Var concat(const std::vector<Var>& inputs, int dim);
Var narrow(const Var& x, int dim, std::int64_t start, std::int64_t length);
Var reshape(const Var& x, Shape shape);

// Mean over each (up to) 2x2 window; odd trailing rows/cols use the partial window.
Var avg_downsample2x(const Var& x);

// Reflection padding of the two trailing dims; pads may exceed the extent
// (the reflection repeats).
Var pad_reflect(const Var& x, int top, int bottom, int left, int right);

Shape broadcast_shape(const Shape& a, const Shape& b);

}  // namespace metabit
