#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "metabit/tensor/autograd.hpp"

namespace metabit {

struct GradcheckOptions {
  double step = 1e-4;       // central difference half-width
  double tolerance = 1e-4;  // on the relative error below
  // Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
  double floor = 1e-3;
  // Per-leaf cap on probed elements; larger leaves are probed at an even stride.
  std::int64_t max_elements_per_leaf = 1 << 30;
  // A probe that misses at `step` is retried at step/10 and step/100. If it
  // then agrees, a kink (relu, clamp, abs) lay inside the original stencil;
  // the probe counts as refined instead of failed. The check fails if more
  // than `max_refined_fraction` of the probes needed refinement.
  bool refine_at_kinks = true;
  double max_refined_fraction = 0.05;
};

struct GradcheckResult {
  bool passed = true;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::int64_t probed = 0;
  std::int64_t refined = 0;
  std::string worst;  // "leaf i element k: analytic a numeric n"
};

// Compares backward() against central finite differences of `loss` with
// respect to each leaf in `leaves`. The leaves are perturbed in place and
// restored; they should hold 64-bit values.
GradcheckResult gradcheck_leaves(const std::function<Var()>& loss, std::vector<Var> leaves,
                                 const GradcheckOptions& options = {});

// Convenience form: wraps `inputs` (converted to 64-bit) as parameters.
GradcheckResult gradcheck(const std::function<Var(const std::vector<Var>&)>& f,
                          const std::vector<Tensor>& inputs, const GradcheckOptions& options = {});

}  // namespace metabit
