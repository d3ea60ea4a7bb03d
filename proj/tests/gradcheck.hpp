#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "takeoff/nn.hpp"

namespace takeoff::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

// Central differences against the analytic gradients left in params by `backward`.
// `loss` must be a pure function of the parameter values.
inline GradCheckResult gradient_check(const nn::ParamRefs& params, const std::function<double()>& loss,
                                      const std::function<void()>& backward, double step = 1e-5,
                                      double floor = 1e-6) {
  nn::zero_grad(params);
  backward();
  GradCheckResult res;
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double orig = p->value[i];
      p->value[i] = orig + step;
      const double up = loss();
      p->value[i] = orig - step;
      const double down = loss();
      p->value[i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = p->grad[i];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), floor});
      res.max_rel_error = std::max(res.max_rel_error, std::abs(numeric - analytic) / denom);
      ++res.checked;
    }
  }
  return res;
}

}  // namespace takeoff::testing
