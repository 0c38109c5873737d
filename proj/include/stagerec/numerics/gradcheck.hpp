#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace stagerec {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

/// Central-difference gradient verification.
///
/// `loss` is any callable mapping a flat parameter vector to a scalar; it is
/// re-evaluated at theta +/- h per coordinate and compared against the
/// supplied analytic gradient. Relative error per coordinate is
/// |analytic - numeric| / max(1, |numeric|) and the maximum over all
/// coordinates is returned.
template <class Real, class LossFn>
GradCheckResult finiteDiffCheck(LossFn&& loss, std::vector<Real> theta,
                                const std::vector<Real>& analytic, Real h) {
  if (theta.size() != analytic.size()) {
    throw std::invalid_argument("gradcheck: analytic gradient has " +
                                std::to_string(analytic.size()) + " entries for " +
                                std::to_string(theta.size()) + " parameters");
  }
  if (!(h > Real(0))) throw std::invalid_argument("gradcheck: step size must be positive");

  GradCheckResult res;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const Real orig = theta[i];
    theta[i] = orig + h;
    const double up = static_cast<double>(loss(theta));
    theta[i] = orig - h;
    const double down = static_cast<double>(loss(theta));
    theta[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw std::runtime_error("gradcheck: non-finite loss at coordinate " + std::to_string(i));
    }
    const double numeric = (up - down) / (2.0 * static_cast<double>(h));
    const double a = static_cast<double>(analytic[i]);
    const double rel = std::abs(a - numeric) / std::max(1.0, std::abs(numeric));
    if (rel > res.max_rel_err) {
      res.max_rel_err = rel;
      res.worst_index = i;
      res.analytic_at_worst = a;
      res.numeric_at_worst = numeric;
    }
  }
  return res;
}

}  // namespace stagerec
