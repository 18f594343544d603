#include "metabit/tensor/autograd.hpp"

#include <stdexcept>
#include <unordered_set>
#include <utility>

namespace metabit {

namespace detail {

struct Node {
  Tensor value;
  std::vector<Var> inputs;
  BackwardFn backward;
  const char* name = "leaf";
  bool requires_grad = false;
  bool leaf = true;
};

}  // namespace detail

struct VarAccess {
  static Var wrap(std::shared_ptr<detail::Node> node) { return Var(std::move(node)); }
  static const std::shared_ptr<detail::Node>& node(const Var& v) { return v.node_; }
};

namespace {

thread_local bool g_recording = true;

const detail::Node& checked(const Var& v) {
  if (!v.defined()) throw std::logic_error("use of an undefined Var");
  return *v.node();
}

}  // namespace

Var Var::constant(Tensor value) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var Var::parameter(Tensor value) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  node->name = "parameter";
  return Var(std::move(node));
}

const Tensor& Var::value() const { return checked(*this).value; }

bool Var::requires_grad() const { return checked(*this).requires_grad; }

bool Var::is_leaf() const { return checked(*this).leaf; }

void Var::assign(Tensor value) {
  if (!defined() || !node_->leaf) throw std::logic_error("assign() is only valid on leaf Vars");
  if (value.shape() != node_->value.shape() || value.dtype() != node_->value.dtype()) {
    throw ShapeError("assign: expected " + to_string(node_->value.shape()) + ", got " +
                     to_string(value.shape()));
  }
  node_->value = std::move(value);
}

bool grad_recording_enabled() { return g_recording; }

NoGradGuard::NoGradGuard() : previous_(g_recording) { g_recording = false; }
NoGradGuard::~NoGradGuard() { g_recording = previous_; }

Var make_op(const char* name, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  bool any = false;
  if (g_recording) {
    for (const auto& in : inputs) any = any || checked(in).requires_grad;
  }
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  node->name = name;
  if (any) {
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
    node->requires_grad = true;
    node->leaf = false;
  }
  return VarAccess::wrap(std::move(node));
}

Tensor Gradients::of(const Var& leaf) const {
  auto it = grads_.find(leaf.node());
  if (it == grads_.end()) return Tensor::zeros(leaf.shape(), leaf.dtype());
  return it->second;
}

bool Gradients::reached(const Var& leaf) const { return grads_.count(leaf.node()) != 0; }

Gradients backward(const Var& loss) {
  const auto& root = checked(loss);
  if (root.value.numel() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " + to_string(root.value.shape()));
  }
  Gradients result;
  if (!root.requires_grad) return result;

  // Post-order DFS gives a topological order with inputs before consumers.
  std::vector<const detail::Node*> order;
  std::unordered_set<const detail::Node*> seen;
  std::vector<std::pair<const detail::Node*, std::size_t>> stack;
  stack.emplace_back(&root, 0);
  seen.insert(&root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      const detail::Node* child = node->inputs[next++].node();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  std::unordered_map<const detail::Node*, Tensor> grads;
  grads[&root] = Tensor::full(root.value.shape(), 1.0, root.value.dtype());
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const detail::Node* node = *it;
    ++result.visited_;
    auto found = grads.find(node);
    if (found == grads.end()) continue;
    if (node->leaf) {
      result.grads_[node] = std::move(found->second);
      grads.erase(found);
      continue;
    }
    std::vector<char> needs(node->inputs.size());
    for (std::size_t i = 0; i < needs.size(); ++i) needs[i] = node->inputs[i].requires_grad();
    BackwardArgs args{node->value, found->second, node->inputs, needs};
    std::vector<Tensor> in_grads = node->backward(args);
    grads.erase(found);
    for (std::size_t i = 0; i < node->inputs.size() && i < in_grads.size(); ++i) {
      if (!needs[i] || !in_grads[i].defined()) continue;
      const detail::Node* child = node->inputs[i].node();
      if (in_grads[i].shape() != child->value.shape()) {
        throw std::logic_error(std::string("backward of '") + node->name +
                               "' produced gradient of shape " + to_string(in_grads[i].shape()) +
                               " for input of shape " + to_string(child->value.shape()));
      }
      accumulate(grads[child], in_grads[i]);
    }
  }
  return result;
}

}  // namespace metabit
