#pragma once

#include <vector>

#include "gemzsl/rng.hpp"
#include "gemzsl/tensor.hpp"

namespace gemzsl::testing {

inline Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                                    bool requires_grad = false) {
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor<double>(std::move(shape), std::move(v), requires_grad);
}

inline std::vector<double> to_vector(const Tensor<double>& t) {
  return {t.values().begin(), t.values().end()};
}

inline std::vector<double> grad_vector(const Tensor<double>& t) {
  return {t.grad().begin(), t.grad().end()};
}

}  // namespace gemzsl::testing
