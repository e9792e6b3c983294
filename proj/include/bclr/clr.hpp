#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "bclr/data.hpp"
#include "bclr/kernels.hpp"

namespace bclr {

/// Treatment effect and nuisance covariate effects, in log-odds units.
struct Coefficients {
  double beta_w = 0.0;
  Eigen::VectorXd beta;

  /// (beta_w, beta_1, ..., beta_p)
  Eigen::VectorXd packed() const;
  static Coefficients unpack(const Eigen::VectorXd& theta);
};

/// DiscordantDiffs laid out for the pair kernels: column-major differences
/// plus a +-1 sign per pair. Build once and reuse in hot loops.
class PairData {
 public:
  explicit PairData(const DiscordantDiffs& d);

  kernels::PairBlock block() const noexcept;
  std::size_t n_pairs() const noexcept { return sign_.size(); }
  std::size_t n_covariates() const noexcept {
    return static_cast<std::size_t>(dx_.cols());
  }
  const Eigen::MatrixXd& delta_x() const noexcept { return dx_; }

 private:
  Eigen::MatrixXd dx_;
  std::vector<double> sign_;
};

/// Log of the conditional likelihood of the discordant pairs, with q_i the
/// probability that the treated member is the case:
///   q_i = logistic(delta_x_i . beta + beta_w).
double clr_loglik(const Coefficients& c, const DiscordantDiffs& d);

/// Gradient ordered (beta_w, beta).
Eigen::VectorXd clr_grad(const Coefficients& c, const DiscordantDiffs& d);

/// Value and gradient at packed theta = (beta_w, beta); grad is overwritten.
double clr_loglik_grad(const PairData& d, std::span<const double> theta,
                       std::span<double> grad);

/// Hessian in (beta_w, beta): -sum q(1-q) x x^T with x = (1, delta_x).
Eigen::MatrixXd clr_hessian(const Coefficients& c, const DiscordantDiffs& d);

struct ClrMleFit {
  Coefficients estimate;
  Eigen::MatrixXd covariance;  // inverse observed information, (p+1)^2
  bool converged = false;
  int iterations = 0;
  double wald_p = 1.0;  // H0: beta_w = 0

  double std_error_w() const { return std::sqrt(covariance(0, 0)); }
};

/// Newton-Raphson from zero. Throws SeparationDetected when a coefficient
/// leaves [-15, 15] or the Hessian is numerically singular.
ClrMleFit clr_fit_mle(const DiscordantDiffs& d);

/// Wald test of the treatment coefficient.
struct WaldTest {
  double estimate = 0.0;
  double std_error = 0.0;
  double p_value = 1.0;
  bool converged = false;
};

/// Partition, difference and fit; Wald test on beta_w.
WaldTest clr_treatment_test(const PairedDataset& data);

namespace clr_limits {
inline constexpr double kSeparationBound = 15.0;
inline constexpr int kMaxNewton = 50;
inline constexpr double kGradTol = 1e-8;
}  // namespace clr_limits

}  // namespace bclr
