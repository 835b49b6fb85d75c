#pragma once

#include <adafuse/core/error.hpp>
#include <adafuse/core/matrix.hpp>

#include <algorithm>
#include <cmath>
#include <string>

namespace adafuse {

/// Compares an analytic gradient with central differences, coordinate by coordinate.
/// Relative error per coordinate is |g - g_fd| / max(1e-8, |g| + |g_fd|); the maximum is returned.
template <class LossFn, class GradFn>
double finite_diff_check(LossFn&& loss_fn, GradFn&& grad_fn, const Matrix& params, double step) {
  detail::require(step > 0.0, "finite_diff_check: step must be positive");
  const Matrix analytic = grad_fn(params);
  require_same_shape(analytic, params, "finite_diff_check");

  Matrix probe = params;
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double original = probe.values()[i];
    probe.values()[i] = original + step;
    const double up = loss_fn(static_cast<const Matrix&>(probe));
    probe.values()[i] = original - step;
    const double down = loss_fn(static_cast<const Matrix&>(probe));
    probe.values()[i] = original;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw Error("finite_diff_check: non-finite loss when perturbing coordinate " +
                  std::to_string(i));
    }
    const double numeric = (up - down) / (2.0 * step);
    const double g = analytic.values()[i];
    const double rel = std::abs(g - numeric) / std::max(1e-8, std::abs(g) + std::abs(numeric));
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace adafuse
