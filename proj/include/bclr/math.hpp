#pragma once

#include <algorithm>
#include <cmath>

namespace bclr {

inline double logistic(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(1 + exp(x)) without overflow.
inline double softplus(double x) noexcept {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

inline double normal_cdf(double x) noexcept {
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

/// Two-sided p-value of a standard-normal statistic.
inline double two_sided_p(double z) noexcept {
  return std::erfc(std::abs(z) / std::sqrt(2.0));
}

/// Standard normal quantile.
double normal_quantile(double u);

}  // namespace bclr
