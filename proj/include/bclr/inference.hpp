#pragma once

#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace bclr {

enum class IntervalMethod { EqualTailed, HpdContiguous, HpdDisjoint };

std::string_view to_string(IntervalMethod m) noexcept;
/// Accepts "cr", "equal-tailed", "hpd-contiguous", "hpd-disjoint".
IntervalMethod parse_interval_method(std::string_view name);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool operator==(const Interval&) const = default;
};

struct IntervalSet {
  std::vector<Interval> intervals;  // sorted, non-overlapping
  double alpha = 0.05;
  IntervalMethod method = IntervalMethod::EqualTailed;

  bool contains(double x) const noexcept;
  double total_width() const noexcept;
  bool operator==(const IntervalSet&) const = default;
};

struct TestDecision {
  double theta0 = 0.0;
  bool reject = false;
  IntervalSet interval_set;
  double point_estimate = 0.0;
};

/// Mean of the pooled draws.
double point_estimate(std::span<const double> draws);

/// Linear-interpolation empirical quantile: rank 1 + (m - 1) u.
double empirical_quantile(std::span<const double> sorted, double u);

IntervalSet equal_tailed_cr(std::span<const double> draws, double alpha);

/// Narrowest window of ceil((1 - alpha) m) consecutive sorted draws.
IntervalSet hpd_contiguous(std::span<const double> draws, double alpha);

/// Gaussian KDE (Silverman bandwidth, 512-point grid) thresholded so the
/// draws at or above the threshold cover at least 1 - alpha of the sample.
IntervalSet hpd_disjoint(std::span<const double> draws, double alpha);

IntervalSet credible_set(std::span<const double> draws, double alpha, IntervalMethod method);

TestDecision decide(std::span<const double> draws, double alpha, double theta0,
                    IntervalMethod method);

namespace hpd_limits {
inline constexpr std::size_t kGridPoints = 512;
inline constexpr std::size_t kMinDisjointDraws = 100;
}  // namespace hpd_limits

}  // namespace bclr
