#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace resample {

/// Central finite differences of a scalar loss over a parameter vector.
/// `loss` is re-evaluated with the vector temporarily perturbed in place.
template <class LossFn>
std::vector<double> central_differences(LossFn&& loss, std::span<double> params,
                                        double h = 1e-5) {
  std::vector<double> grad(params.size(), 0.0);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    const double up = loss();
    params[i] = saved - h;
    const double down = loss();
    params[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

/// Max component deviation normalized by the finite-difference gradient's
/// infinity norm (floored so near-zero gradients compare absolutely).
inline double max_relative_error(std::span<const double> analytic,
                                 std::span<const double> numeric, double floor = 1e-3) {
  double scale = floor;
  for (double g : numeric) scale = std::max(scale, std::fabs(g));
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i)
    worst = std::max(worst, std::fabs(analytic[i] - numeric[i]));
  return worst / scale;
}

}  // namespace resample
