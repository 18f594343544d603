#include "metabit/tensor/init.hpp"

namespace metabit {

Tensor uniform(Shape shape, double bound, Rng& rng, DType dtype) {
  Tensor t(std::move(shape), dtype);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (std::int64_t i = 0; i < t.numel(); ++i) t.set_item(i, dist(rng));
  return t;
}

}  // namespace metabit
