#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "dualvq/numerics/graph.hpp"

namespace dualvq {

/// Builds a scalar loss on a fresh graph from the current parameter values.
using LossBuilder = std::function<Var(Graph&)>;

/// Compares the analytic gradient of `param` against central differences.
/// Returns max over elements of |analytic - numeric| / (|numeric| + 1e-8).
/// `param` is restored to its original value on return.
inline double grad_check(const LossBuilder& build, Parameter& param, double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("grad_check: epsilon must be positive");
  param.zero_grad();
  {
    Graph g;
    g.backward(build(g));
  }
  const Tensor analytic = param.grad;
  double worst = 0.0;
  for (std::size_t i = 0; i < param.value.size(); ++i) {
    const double orig = param.value[i];
    param.value[i] = orig + epsilon;
    double fp, fm;
    {
      Graph g;
      fp = g.value(build(g)).item();
    }
    param.value[i] = orig - epsilon;
    {
      Graph g;
      fm = g.value(build(g)).item();
    }
    param.value[i] = orig;
    const double numeric = (fp - fm) / (2.0 * epsilon);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / (std::abs(numeric) + 1e-8));
  }
  param.zero_grad();
  return worst;
}

}  // namespace dualvq
