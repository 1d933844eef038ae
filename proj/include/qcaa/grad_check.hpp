#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "qcaa/tensor.hpp"

namespace qcaa {

/// Scalar-valued function of the tensors passed to grad_check. It must build
/// its result on the supplied graph and be deterministic across calls.
using ScalarFn = std::function<Tensor(Graph&)>;

/// Max over every input element of
///   |analytic - central_difference| / max(1, |central_difference|).
///
/// Inputs are perturbed in place and restored; their requires_grad flag is
/// forced on for the analytic pass.
inline double grad_check(const ScalarFn& f, std::vector<Tensor> inputs, double h = 1e-5) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.clear_grad();
  }
  {
    Graph g;
    Tensor loss = f(g);
    g.backward(loss);
  }
  auto evaluate = [&] {
    Graph g;
    return f(g).item();
  };
  double worst = 0.0;
  for (auto& t : inputs) {
    const std::vector<double> analytic = t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                                                      : std::vector<double>(t.size(), 0.0);
    auto data = t.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + h;
      const double up = evaluate();
      data[i] = saved - h;
      const double down = evaluate();
      data[i] = saved;
      const double fd = (up - down) / (2.0 * h);
      worst = std::max(worst, std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd)));
    }
  }
  return worst;
}

}  // namespace qcaa
