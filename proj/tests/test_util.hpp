#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "qcaa/rng.hpp"
#include "qcaa/tensor.hpp"

namespace qcaa::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0, bool requires_grad = false) {
  Tensor t(std::move(shape), requires_grad);
  for (auto& v : t.data()) v = scale * rng.normal();
  return t;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace qcaa::testing
