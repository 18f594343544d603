#pragma once

#include <random>

#include "metabit/tensor/tensor.hpp"

namespace metabit {

using Rng = std::mt19937_64;

// Uniform in [-bound, bound].
Tensor uniform(Shape shape, double bound, Rng& rng, DType dtype = DType::kFloat32);

}  // namespace metabit
