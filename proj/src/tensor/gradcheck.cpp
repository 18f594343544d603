#include "metabit/tensor/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace metabit {

GradcheckResult gradcheck_leaves(const std::function<Var()>& loss, std::vector<Var> leaves,
                                 const GradcheckOptions& options) {
  GradcheckResult result;
  const Gradients grads = backward(loss());

  auto evaluate = [&] {
    NoGradGuard no_grad;
    return loss().value().item(0);
  };

  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Var& leaf = leaves[li];
    const Tensor analytic = grads.of(leaf);
    const Tensor original = leaf.value();
    const std::int64_t n = original.numel();
    const std::int64_t stride = std::max<std::int64_t>(1, (n + options.max_elements_per_leaf - 1) /
                                                              options.max_elements_per_leaf);
    for (std::int64_t k = 0; k < n; k += stride) {
      Tensor probe = original;
      const double x = original.item(k);
      auto central = [&](double h) {
        probe.set_item(k, x + h);
        leaf.assign(probe);
        const double up = evaluate();
        probe.set_item(k, x - h);
        leaf.assign(probe);
        const double down = evaluate();
        leaf.assign(original);
        return (up - down) / (2.0 * h);
      };

      const double a = analytic.item(k);
      auto relative = [&](double numeric) {
        return std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), options.floor});
      };
      const double numeric = central(options.step);
      const double abs_err = std::abs(a - numeric);
      const double rel = relative(numeric);
      ++result.probed;
      if (rel >= options.tolerance && options.refine_at_kinks &&
          (relative(central(options.step / 10)) < options.tolerance ||
           relative(central(options.step / 100)) < options.tolerance)) {
        ++result.refined;
        continue;
      }
      result.max_abs_error = std::max(result.max_abs_error, abs_err);
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        std::ostringstream os;
        os << "leaf " << li << " element " << k << ": analytic " << a << " numeric " << numeric;
        result.worst = os.str();
      }
    }
  }
  result.passed = result.max_rel_error < options.tolerance &&
                  static_cast<double>(result.refined) <= options.max_refined_fraction * static_cast<double>(result.probed);
  return result;
}

GradcheckResult gradcheck(const std::function<Var(const std::vector<Var>&)>& f,
                          const std::vector<Tensor>& inputs, const GradcheckOptions& options) {
  std::vector<Var> leaves;
  for (const auto& t : inputs) leaves.push_back(Var::parameter(t.to(DType::kFloat64)));
  return gradcheck_leaves([&] { return f(leaves); }, leaves, options);
}

}  // namespace metabit
