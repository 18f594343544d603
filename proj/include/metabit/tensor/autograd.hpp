#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

#include "metabit/tensor/tensor.hpp"

namespace metabit {

namespace detail {
struct Node;
}

// Handle to a value recorded on the autodiff tape. Copies share the node.
class Var {
 public:
  Var() = default;

  static Var constant(Tensor value);
  // Leaf whose gradient is reported by backward().
  static Var parameter(Tensor value);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  DType dtype() const { return value().dtype(); }
  bool requires_grad() const;
  bool is_leaf() const;

  // Replaces the value of a leaf. Used by optimizers; shape and dtype must match.
  void assign(Tensor value);

  const detail::Node* node() const { return node_.get(); }

 private:
  friend struct VarAccess;
  explicit Var(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

struct BackwardArgs {
  const Tensor& output;
  const Tensor& grad_output;
  std::span<const Var> inputs;
  std::span<const char> needs_grad;

  bool needs(std::size_t i) const { return needs_grad[i] != 0; }
};

// Returns one gradient per input; entries may be left undefined for inputs
// that do not need a gradient.
using BackwardFn = std::function<std::vector<Tensor>(const BackwardArgs&)>;

// Records a primitive. When no input requires a gradient (or recording is
// disabled), the result is a constant and the inputs are not retained.
Var make_op(const char* name, Tensor value, std::vector<Var> inputs, BackwardFn backward);

class Gradients {
 public:
  // Gradient of the loss with respect to a parameter leaf; zeros when the
  // leaf was not reachable from the loss.
  Tensor of(const Var& leaf) const;
  bool reached(const Var& leaf) const;
  std::size_t visited_nodes() const { return visited_; }

 private:
  friend Gradients backward(const Var& loss);
  std::unordered_map<const detail::Node*, Tensor> grads_;
  std::size_t visited_ = 0;
};

// Reverse-mode sweep from a scalar loss.
Gradients backward(const Var& loss);

// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_recording_enabled();

}  // namespace metabit
