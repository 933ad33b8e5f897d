#pragma once

#include <algorithm>
#include <cmath>

#include "attriq/autodiff.hpp"

namespace attriq::ad {

/// Largest relative disagreement between backward() and central finite
/// differences over every coordinate of every bound input. The denominator is
/// max(|analytic|, |numeric|, 1e-8).
inline double grad_check(const Tape& tape, const Bindings& bindings, NodeId target, double eps = 1e-5) {
  if (!(eps > 0.0)) throw Error("grad_check: eps must be positive");
  Values values = forward(tape, bindings);
  Gradients analytic = backward(tape, values, target);

  Bindings probe = bindings;
  double worst = 0.0;
  for (auto& [id, tensor] : probe) {
    const Tensor& g = analytic.at(id);
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      const double saved = tensor[i];
      tensor[i] = saved + eps;
      const double up = forward(tape, probe)[target][0];
      tensor[i] = saved - eps;
      const double down = forward(tape, probe)[target][0];
      tensor[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double denom = std::max({std::abs(g[i]), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(g[i] - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace attriq::ad
