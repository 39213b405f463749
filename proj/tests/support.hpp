#pragma once

// Shared helpers for the unit and acceptance suites.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "adgn/nn.hpp"

namespace adgn::testing {

/// Central-difference check of d(loss)/d(param) for every coordinate of the
/// given parameters. `loss` must rebuild its graph from the current parameter
/// values and return the scalar; `analytic` holds the backward-pass
/// gradients in the same order. Returns the max |a - n| / max(1, |a|).
inline double param_grad_error(const std::vector<Tensor*>& params,
                               const std::vector<std::vector<float>>& analytic,
                               const std::function<double()>& loss, double eps = 1e-3) {
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& t = *params[p];
    for (std::size_t i = 0; i < t.size(); ++i) {
      const float keep = t.data[i];
      t.data[i] = static_cast<float>(keep + eps);
      const double up_at = t.data[i];
      const double up = loss();
      t.data[i] = static_cast<float>(keep - eps);
      const double down_at = t.data[i];
      const double down = loss();
      t.data[i] = keep;
      const double numeric = (up - down) / (up_at - down_at);
      const double a = analytic[p][i];
      worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
    }
  }
  return worst;
}

inline std::vector<std::vector<float>> take_grads(const std::vector<Tensor*>& params) {
  std::vector<std::vector<float>> out;
  for (Tensor* t : params) {
    out.push_back(t->grad ? *t->grad : std::vector<float>(t->size(), 0.0f));
    t->grad.reset();
  }
  return out;
}

}  // namespace adgn::testing
