#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "metabit/tensor/autograd.hpp"

namespace metabit {

enum class OptimizerKind { kAdam, kRmsProp };

struct OptimizerHyperparams {
  double lr = 1e-4;
  double beta1 = 0.9;     // Adam
  double beta2 = 0.999;   // Adam
  double decay = 0.99;    // RMSProp smoothing constant
  double epsilon = 1e-8;
};

// Accumulators are kept per parameter, in parameter order.
struct OptimizerState {
  OptimizerKind kind = OptimizerKind::kAdam;
  OptimizerHyperparams hp;
  std::int64_t step = 0;
  std::vector<Tensor> first_moment;   // Adam m
  std::vector<Tensor> second_moment;  // Adam v / RMSProp mean square
};

OptimizerState make_adam(std::span<const Var> params, double lr);
OptimizerState make_rmsprop(std::span<const Var> params, double lr);

// Applies one update in place to the leaf values of `params`.
void optimizer_step(OptimizerState& state, std::span<Var> params, std::span<const Tensor> grads);
void optimizer_step(OptimizerState& state, std::span<Var> params, const Gradients& grads);

// lr0 before `start`, cosine decay to zero at `end`, zero afterwards.
double cosine_anneal(double lr0, std::int64_t epoch, std::int64_t start, std::int64_t end);

}  // namespace metabit
