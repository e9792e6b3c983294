#include "bclr/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "bclr/error.hpp"

namespace bclr {

std::string_view to_string(IntervalMethod m) noexcept {
  switch (m) {
    case IntervalMethod::EqualTailed: return "cr";
    case IntervalMethod::HpdContiguous: return "hpd-contiguous";
    case IntervalMethod::HpdDisjoint: return "hpd-disjoint";
  }
  return "unknown";
}

IntervalMethod parse_interval_method(std::string_view name) {
  if (name == "cr" || name == "equal-tailed") return IntervalMethod::EqualTailed;
  if (name == "hpd-contiguous" || name == "hpd") return IntervalMethod::HpdContiguous;
  if (name == "hpd-disjoint") return IntervalMethod::HpdDisjoint;
  fail(ErrorCode::InvalidArgument, "unknown interval method '" + std::string(name) + "'");
}

bool IntervalSet::contains(double x) const noexcept {
  return std::any_of(intervals.begin(), intervals.end(),
                     [x](const Interval& i) { return i.lo <= x && x <= i.hi; });
}

double IntervalSet::total_width() const noexcept {
  double w = 0.0;
  for (const auto& i : intervals) w += i.hi - i.lo;
  return w;
}

namespace {

void check_draws(std::span<const double> draws, double alpha, std::size_t min_size) {
  if (draws.empty()) fail(ErrorCode::EmptyDraws, "no posterior draws");
  if (!(alpha > 0.0 && alpha < 1.0)) {
    fail(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
  }
  if (draws.size() < min_size) {
    fail(min_size >= hpd_limits::kMinDisjointDraws ? ErrorCode::TooFewDraws
                                                   : ErrorCode::EmptyDraws,
         "need at least " + std::to_string(min_size) + " draws, got " +
             std::to_string(draws.size()));
  }
  for (double v : draws) {
    if (!std::isfinite(v)) fail(ErrorCode::NonFiniteState, "non-finite draw");
  }
}

/// Draws relative to their minimum. Interval endpoints are built as
/// anchor + offset with the offset rounded outward to a dyadic lattice far
/// below the sample spread, so shifting every draw by a representable
/// constant shifts the endpoints by exactly that constant.
struct Anchored {
  double anchor = 0.0;
  std::vector<double> offsets;  // sorted
  double quantum = 0.0;

  explicit Anchored(std::span<const double> draws) : offsets(draws.begin(), draws.end()) {
    std::sort(offsets.begin(), offsets.end());
    anchor = offsets.front();
    for (double& v : offsets) v -= anchor;
    const double range = offsets.back();
    if (range > 0.0) quantum = std::ldexp(1.0, std::ilogb(range) - 44);
  }

  double lower(double offset) const {
    if (quantum > 0.0) offset = std::floor(offset / quantum) * quantum;
    return anchor + offset;
  }

  double upper(double offset) const {
    if (quantum > 0.0) offset = std::ceil(offset / quantum) * quantum;
    return anchor + offset;
  }

  std::size_t size() const { return offsets.size(); }
};

std::size_t window_size(std::size_t m, double alpha) {
  const double k = std::ceil((1.0 - alpha) * static_cast<double>(m) - 1e-9);
  return std::clamp<std::size_t>(static_cast<std::size_t>(k), 1, m);
}

}  // namespace

double point_estimate(std::span<const double> draws) {
  if (draws.empty()) fail(ErrorCode::EmptyDraws, "no posterior draws");
  double s = 0.0;
  for (double v : draws) s += v;
  return s / static_cast<double>(draws.size());
}

double empirical_quantile(std::span<const double> sorted, double u) {
  if (sorted.empty()) fail(ErrorCode::EmptyDraws, "no posterior draws");
  const double pos = (static_cast<double>(sorted.size()) - 1.0) * u;
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

IntervalSet equal_tailed_cr(std::span<const double> draws, double alpha) {
  check_draws(draws, alpha, 2);
  const Anchored a(draws);
  const double lo = empirical_quantile(a.offsets, 0.5 * alpha);
  const double hi = empirical_quantile(a.offsets, 1.0 - 0.5 * alpha);
  return {{{a.lower(lo), a.upper(hi)}}, alpha, IntervalMethod::EqualTailed};
}

IntervalSet hpd_contiguous(std::span<const double> draws, double alpha) {
  check_draws(draws, alpha, 2);
  std::vector<double> x(draws.begin(), draws.end());
  std::sort(x.begin(), x.end());
  const std::size_t m = x.size();
  const std::size_t k = window_size(m, alpha);
  std::size_t best = 0;
  double best_width = x[k - 1] - x[0];
  for (std::size_t i = 1; i + k <= m; ++i) {
    const double w = x[i + k - 1] - x[i];
    if (w < best_width) {
      best_width = w;
      best = i;
    }
  }
  return {{{x[best], x[best + k - 1]}}, alpha, IntervalMethod::HpdContiguous};
}

IntervalSet hpd_disjoint(std::span<const double> draws, double alpha) {
  check_draws(draws, alpha, hpd_limits::kMinDisjointDraws);
  const Anchored a(draws);
  const std::vector<double>& x = a.offsets;
  const std::size_t m = x.size();
  const double md = static_cast<double>(m);
  if (x.back() == 0.0) return {{{a.anchor, a.anchor}}, alpha, IntervalMethod::HpdDisjoint};

  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= md;
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (md - 1.0));
  const double iqr = empirical_quantile(x, 0.75) - empirical_quantile(x, 0.25);
  double spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0)) spread = sd;
  const double h = 0.9 * spread * std::pow(md, -0.2);

  // Linear binning onto the grid, then direct Gaussian convolution.
  constexpr std::size_t G = hpd_limits::kGridPoints;
  const double g0 = x.front() - 3.0 * h;
  const double step = (x.back() + 3.0 * h - g0) / static_cast<double>(G - 1);
  std::vector<double> counts(G, 0.0);
  for (double v : x) {
    const double pos = (v - g0) / step;
    const auto j = std::min(static_cast<std::size_t>(pos), G - 2);
    const double frac = pos - static_cast<double>(j);
    counts[j] += 1.0 - frac;
    counts[j + 1] += frac;
  }
  std::vector<double> kernel(G);
  const double norm = 1.0 / (md * h * std::sqrt(2.0 * std::numbers::pi));
  for (std::size_t d = 0; d < G; ++d) {
    const double z = static_cast<double>(d) * step / h;
    kernel[d] = norm * std::exp(-0.5 * z * z);
  }
  std::vector<double> dens(G, 0.0);
  for (std::size_t i = 0; i < G; ++i) {
    if (counts[i] == 0.0) continue;
    for (std::size_t j = 0; j < G; ++j) {
      dens[j] += counts[i] * kernel[i > j ? i - j : j - i];
    }
  }

  auto density_at = [&](double v) {
    const double pos = (v - g0) / step;
    const auto j = std::min(static_cast<std::size_t>(pos), G - 2);
    const double frac = pos - static_cast<double>(j);
    return dens[j] + frac * (dens[j + 1] - dens[j]);
  };

  // The largest threshold keeping at least k draws at or above it is the
  // k-th largest draw density.
  const std::size_t k = window_size(m, alpha);
  std::vector<double> at_draws(m);
  for (std::size_t i = 0; i < m; ++i) at_draws[i] = density_at(x[i]);
  std::nth_element(at_draws.begin(), at_draws.begin() + static_cast<std::ptrdiff_t>(k - 1),
                   at_draws.end(), std::greater<>());
  const double t = at_draws[k - 1];

  IntervalSet out{{}, alpha, IntervalMethod::HpdDisjoint};
  auto crossing = [&](std::size_t j) {
    const double f = (t - dens[j]) / (dens[j + 1] - dens[j]);
    return g0 + (static_cast<double>(j) + f) * step;
  };
  std::size_t j = 0;
  while (j < G) {
    if (dens[j] < t) {
      ++j;
      continue;
    }
    const double lo = j == 0 ? g0 : crossing(j - 1);
    std::size_t e = j;
    while (e + 1 < G && dens[e + 1] >= t) ++e;
    const double hi = e + 1 == G ? g0 + static_cast<double>(G - 1) * step : crossing(e);
    out.intervals.push_back({a.lower(lo), a.upper(hi)});
    j = e + 1;
  }
  return out;
}

IntervalSet credible_set(std::span<const double> draws, double alpha, IntervalMethod method) {
  switch (method) {
    case IntervalMethod::EqualTailed: return equal_tailed_cr(draws, alpha);
    case IntervalMethod::HpdContiguous: return hpd_contiguous(draws, alpha);
    case IntervalMethod::HpdDisjoint: return hpd_disjoint(draws, alpha);
  }
  fail(ErrorCode::InvalidArgument, "unknown interval method");
}

TestDecision decide(std::span<const double> draws, double alpha, double theta0,
                    IntervalMethod method) {
  TestDecision d;
  d.theta0 = theta0;
  d.interval_set = credible_set(draws, alpha, method);
  d.reject = !d.interval_set.contains(theta0);
  d.point_estimate = point_estimate(draws);
  return d;
}

}  // namespace bclr
