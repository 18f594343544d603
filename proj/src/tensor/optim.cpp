#include "metabit/tensor/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace metabit {

namespace {

OptimizerState make_state(OptimizerKind kind, std::span<const Var> params, double lr) {
  OptimizerState s;
  s.kind = kind;
  s.hp.lr = lr;
  for (const auto& p : params) {
    if (kind == OptimizerKind::kAdam) s.first_moment.push_back(Tensor::zeros(p.shape(), p.dtype()));
    s.second_moment.push_back(Tensor::zeros(p.shape(), p.dtype()));
  }
  return s;
}

}  // namespace

OptimizerState make_adam(std::span<const Var> params, double lr) {
  return make_state(OptimizerKind::kAdam, params, lr);
}

OptimizerState make_rmsprop(std::span<const Var> params, double lr) {
  return make_state(OptimizerKind::kRmsProp, params, lr);
}

void optimizer_step(OptimizerState& state, std::span<Var> params, std::span<const Tensor> grads) {
  if (params.size() != grads.size() || params.size() != state.second_moment.size()) {
    throw ShapeError("optimizer_step: " + std::to_string(params.size()) + " params, " +
                     std::to_string(grads.size()) + " grads, state for " +
                     std::to_string(state.second_moment.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != grads[i].shape() || params[i].shape() != state.second_moment[i].shape()) {
      throw ShapeError("optimizer_step: shape mismatch at parameter " + std::to_string(i) + ": " +
                       to_string(params[i].shape()) + " vs grad " + to_string(grads[i].shape()));
    }
  }
  ++state.step;
  const auto& hp = state.hp;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(hp.beta1, t);
  const double bias2 = 1.0 - std::pow(hp.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor value = params[i].value();
    visit_dtype(value.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto p = value.data<T>();
      auto g = grads[i].data<T>();
      auto v = state.second_moment[i].data<T>();
      if (state.kind == OptimizerKind::kAdam) {
        auto m = state.first_moment[i].data<T>();
        for (std::size_t k = 0; k < p.size(); ++k) {
          m[k] = static_cast<T>(hp.beta1 * m[k] + (1.0 - hp.beta1) * g[k]);
          v[k] = static_cast<T>(hp.beta2 * v[k] + (1.0 - hp.beta2) * g[k] * g[k]);
          const double mhat = m[k] / bias1;
          const double vhat = v[k] / bias2;
          p[k] = static_cast<T>(p[k] - hp.lr * mhat / (std::sqrt(vhat) + hp.epsilon));
        }
      } else {
        for (std::size_t k = 0; k < p.size(); ++k) {
          v[k] = static_cast<T>(hp.decay * v[k] + (1.0 - hp.decay) * g[k] * g[k]);
          p[k] = static_cast<T>(p[k] - hp.lr * g[k] / (std::sqrt(static_cast<double>(v[k])) + hp.epsilon));
        }
      }
    });
    params[i].assign(std::move(value));
  }
}

void optimizer_step(OptimizerState& state, std::span<Var> params, const Gradients& grads) {
  std::vector<Tensor> g;
  g.reserve(params.size());
  for (const auto& p : params) g.push_back(grads.of(p));
  optimizer_step(state, params, g);
}

double cosine_anneal(double lr0, std::int64_t epoch, std::int64_t start, std::int64_t end) {
  if (start > end) throw std::invalid_argument("cosine_anneal: start > end");
  if (epoch < start) return lr0;
  if (epoch >= end) return 0.0;
  const double frac = static_cast<double>(epoch - start) / static_cast<double>(end - start);
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace metabit
