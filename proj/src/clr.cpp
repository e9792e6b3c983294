#include "bclr/clr.hpp"

#include <cmath>
#include <string>

#include "bclr/error.hpp"
#include "bclr/math.hpp"

namespace bclr {

Eigen::VectorXd Coefficients::packed() const {
  Eigen::VectorXd theta(beta.size() + 1);
  theta(0) = beta_w;
  theta.tail(beta.size()) = beta;
  return theta;
}

Coefficients Coefficients::unpack(const Eigen::VectorXd& theta) {
  Coefficients c;
  c.beta_w = theta(0);
  c.beta = theta.tail(theta.size() - 1);
  return c;
}

PairData::PairData(const DiscordantDiffs& d)
    : dx_(d.delta_x), sign_(d.n_pairs()) {
  if (static_cast<std::size_t>(d.delta_x.rows()) != d.n_pairs()) {
    fail(ErrorCode::DimensionMismatch,
         "delta_x has " + std::to_string(d.delta_x.rows()) + " rows but " +
             std::to_string(d.n_pairs()) + " case indicators");
  }
  for (std::size_t i = 0; i < sign_.size(); ++i) {
    sign_[i] = d.case_is_treated[i] ? 1.0 : -1.0;
  }
}

kernels::PairBlock PairData::block() const noexcept {
  return {dx_.data(), sign_.data(), sign_.size(),
          static_cast<std::size_t>(dx_.cols())};
}

namespace {

void check_dims(const Coefficients& c, const DiscordantDiffs& d) {
  if (static_cast<std::size_t>(c.beta.size()) != d.n_covariates()) {
    fail(ErrorCode::DimensionMismatch,
         "coefficient length " + std::to_string(c.beta.size()) +
             " vs " + std::to_string(d.n_covariates()) + " covariates");
  }
}

}  // namespace

double clr_loglik_grad(const PairData& d, std::span<const double> theta,
                       std::span<double> grad) {
  if (theta.size() != d.n_covariates() + 1 || grad.size() != theta.size()) {
    fail(ErrorCode::DimensionMismatch, "theta/grad length must be p+1");
  }
  return kernels::clr_value_grad(d.block(), theta[0], theta.data() + 1,
                                 grad.data());
}

double clr_loglik(const Coefficients& c, const DiscordantDiffs& d) {
  check_dims(c, d);
  const PairData pd(d);
  const Eigen::VectorXd theta = c.packed();
  Eigen::VectorXd grad(theta.size());
  return clr_loglik_grad(pd, {theta.data(), static_cast<std::size_t>(theta.size())},
                         {grad.data(), static_cast<std::size_t>(grad.size())});
}

Eigen::VectorXd clr_grad(const Coefficients& c, const DiscordantDiffs& d) {
  check_dims(c, d);
  const PairData pd(d);
  const Eigen::VectorXd theta = c.packed();
  Eigen::VectorXd grad(theta.size());
  clr_loglik_grad(pd, {theta.data(), static_cast<std::size_t>(theta.size())},
                  {grad.data(), static_cast<std::size_t>(grad.size())});
  return grad;
}

Eigen::MatrixXd clr_hessian(const Coefficients& c, const DiscordantDiffs& d) {
  check_dims(c, d);
  const Eigen::Index k = c.beta.size() + 1;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(k, k);
  Eigen::VectorXd x(k);
  for (Eigen::Index i = 0; i < d.delta_x.rows(); ++i) {
    x(0) = 1.0;
    x.tail(k - 1) = d.delta_x.row(i).transpose();
    const double q = logistic(c.beta_w + d.delta_x.row(i).dot(c.beta));
    h.noalias() -= q * (1.0 - q) * x * x.transpose();
  }
  return h;
}

ClrMleFit clr_fit_mle(const DiscordantDiffs& d) {
  if (d.n_pairs() == 0) {
    fail(ErrorCode::NoDiscordantPairs, "CLR fit needs at least one discordant pair");
  }
  const PairData pd(d);
  const auto k = static_cast<Eigen::Index>(d.n_covariates() + 1);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd grad(k);
  auto eval = [&](const Eigen::VectorXd& t, Eigen::VectorXd& g) {
    return clr_loglik_grad(pd, {t.data(), static_cast<std::size_t>(k)},
                           {g.data(), static_cast<std::size_t>(k)});
  };

  ClrMleFit fit;
  double ll = eval(theta, grad);
  for (int iter = 0; iter < clr_limits::kMaxNewton; ++iter) {
    if (grad.cwiseAbs().maxCoeff() < clr_limits::kGradTol) {
      fit.converged = true;
      break;
    }
    const Eigen::MatrixXd info = -clr_hessian(Coefficients::unpack(theta), d);
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        ldlt.rcond() < 1e-13) {
      fail(ErrorCode::SeparationDetected,
           "CLR Hessian is numerically singular at iteration " +
               std::to_string(iter));
    }
    const Eigen::VectorXd step = ldlt.solve(grad);
    Eigen::VectorXd next = theta + step;
    Eigen::VectorXd next_grad(k);
    double next_ll = eval(next, next_grad);
    // The log-likelihood is concave, so halving restores ascent.
    for (int h = 0; h < 30 && !(next_ll >= ll - 1e-12); ++h) {
      next = theta + std::ldexp(1.0, -(h + 1)) * step;
      next_ll = eval(next, next_grad);
    }
    theta = next;
    grad = next_grad;
    ll = next_ll;
    fit.iterations = iter + 1;
    if (theta.cwiseAbs().maxCoeff() > clr_limits::kSeparationBound) {
      fail(ErrorCode::SeparationDetected,
           "CLR coefficient exceeded " +
               std::to_string(clr_limits::kSeparationBound) +
               " in magnitude: parameter estimates diverge");
    }
  }
  if (!fit.converged && grad.cwiseAbs().maxCoeff() < clr_limits::kGradTol) {
    fit.converged = true;
  }

  fit.estimate = Coefficients::unpack(theta);
  const Eigen::MatrixXd info = -clr_hessian(fit.estimate, d);
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < 1e-13) {
    fail(ErrorCode::SeparationDetected, "CLR information is singular at the optimum");
  }
  fit.covariance = ldlt.solve(Eigen::MatrixXd::Identity(k, k));
  fit.covariance = 0.5 * (fit.covariance + fit.covariance.transpose()).eval();
  fit.wald_p = two_sided_p(theta(0) / std::sqrt(fit.covariance(0, 0)));
  return fit;
}

WaldTest clr_treatment_test(const PairedDataset& data) {
  const DiscordantDiffs d = difference_discordant(data, partition_pairs(data));
  const ClrMleFit fit = clr_fit_mle(d);
  WaldTest t;
  t.estimate = fit.estimate.beta_w;
  t.std_error = fit.std_error_w();
  t.p_value = fit.wald_p;
  t.converged = fit.converged;
  return t;
}

}  // namespace bclr
