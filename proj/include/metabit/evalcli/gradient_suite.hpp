#pragma once

#include <functional>
#include <string>
#include <vector>

#include "metabit/tensor/gradcheck.hpp"

namespace metabit {

struct GradientCheck {
  std::string group;  // primitive, warp, gq, loss, pipeline
  std::string name;
  double tolerance = 0;
  GradcheckResult result;
};

// 64-bit central-difference checks of every differentiable primitive, both
// warps, the GQ block and stack, every loss term and a tiny full pipeline
// (tolerance 1e-3; everything else 1e-4). `progress` sees each check as it
// finishes.
std::vector<GradientCheck> run_gradient_suite(const std::function<void(const GradientCheck&)>& progress = {});

}  // namespace metabit
