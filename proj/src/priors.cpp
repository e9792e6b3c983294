#include "bclr/priors.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "bclr/error.hpp"

namespace bclr {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

}  // namespace

PriorSpec::PriorSpec(PriorKind kind, Eigen::VectorXd b_c, Eigen::MatrixXd sigma_c,
                     const DiscordantDiffs& diffs, double tau2)
    : kind_(kind),
      b_c_(std::move(b_c)),
      sigma_c_(std::move(sigma_c)),
      tau2_(tau2),
      n_discordant_(diffs.n_pairs()) {
  const Eigen::Index p = b_c_.size();
  if (sigma_c_.rows() != p || sigma_c_.cols() != p ||
      static_cast<std::size_t>(p) != diffs.n_covariates()) {
    fail(ErrorCode::DimensionMismatch,
         "prior dimension " + std::to_string(p) + " does not match Sigma_C (" +
             std::to_string(sigma_c_.rows()) + "x" + std::to_string(sigma_c_.cols()) +
             ") or the " + std::to_string(diffs.n_covariates()) + " covariates");
  }
  if (!(tau2_ > 0.0) || !std::isfinite(tau2_)) {
    fail(ErrorCode::InvalidArgument, "tau2 must be positive and finite");
  }
  if ((has_g(kind_) || has_pmp(kind_)) && n_discordant_ == 0) {
    fail(ErrorCode::NoDiscordantPairs,
         "g, PMP and hybrid priors need at least one discordant pair");
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(sigma_c_);
  if (llt.info() != Eigen::Success) {
    fail(ErrorCode::RankDeficient, "Sigma_C is not positive definite");
  }
  sigma_inv_ = llt.solve(Eigen::MatrixXd::Identity(p, p));
  sigma_inv_ = 0.5 * (sigma_inv_ + sigma_inv_.transpose()).eval();
  log_det_sigma_ = 2.0 * llt.matrixLLT().diagonal().array().log().sum();

  if (has_pmp(kind_)) {
    pairs_ = std::make_shared<const PairData>(diffs);
    set_w_tilde(orthogonalize_treatment(diffs));
  }
}

void PriorSpec::set_w_tilde(Eigen::VectorXd w_tilde) {
  if (static_cast<std::size_t>(w_tilde.size()) != n_discordant_) {
    fail(ErrorCode::DimensionMismatch, "w_tilde length must equal |D|");
  }
  if (!pairs_) {
    fail(ErrorCode::InvalidArgument, "w_tilde is only used by PMP and hybrid priors");
  }
  w_tilde_ = std::move(w_tilde);
  w2_.resize(n_discordant_);
  for (std::size_t i = 0; i < n_discordant_; ++i) {
    w2_[i] = w_tilde_(static_cast<Eigen::Index>(i)) * w_tilde_(static_cast<Eigen::Index>(i));
  }
}

double PriorSpec::quad_form(std::span<const double> beta) const {
  const Eigen::Map<const Eigen::VectorXd> b(beta.data(), b_c_.size());
  const Eigen::VectorXd d = b - b_c_;
  return d.dot(sigma_inv_ * d);
}

double PriorSpec::info_ww(std::span<const double> theta, std::span<double> grad) const {
  if (!pairs_) {
    fail(ErrorCode::InvalidArgument, "I_ww is only defined for PMP and hybrid priors");
  }
  return kernels::info_ww_grad(pairs_->block(), w2_.data(), theta[0],
                               theta.data() + 1, grad.data());
}

double PriorSpec::log_density_fixed_g(std::span<const double> theta, double g,
                                      std::span<double> grad) const {
  const Eigen::Index p = b_c_.size();
  const Eigen::Map<const Eigen::VectorXd> beta(theta.data() + 1, p);
  Eigen::Map<Eigen::VectorXd> gbeta(grad.data() + 1, p);
  const double scale = has_g(kind_) ? g : 1.0;

  const Eigen::VectorXd s = sigma_inv_ * (beta - b_c_);
  double value = -0.5 * (beta - b_c_).dot(s) / scale;
  gbeta = -s / scale;

  if (has_pmp(kind_)) {
    grad[0] = 0.0;
    thread_local std::vector<double> dinfo;
    dinfo.resize(static_cast<std::size_t>(p) + 1);
    const double info = info_ww(theta, dinfo);
    if (!(info > 0.0) || !std::isfinite(info)) {
      std::fill(grad.begin(), grad.end(), 0.0);
      return -std::numeric_limits<double>::infinity();
    }
    value += 0.5 * std::log(info);
    for (std::size_t k = 0; k < dinfo.size(); ++k) grad[k] += 0.5 * dinfo[k] / info;
  } else {
    value -= 0.5 * theta[0] * theta[0] / tau2_;
    grad[0] = -theta[0] / tau2_;
  }
  return value;
}

PriorValue log_prior_and_grad(const PriorSpec& spec, const PriorState& state) {
  const Coefficients& c = state.coefficients;
  const auto p = static_cast<Eigen::Index>(spec.n_covariates());
  if (c.beta.size() != p) {
    fail(ErrorCode::DimensionMismatch, "state dimension does not match the prior");
  }
  if (!std::isfinite(c.beta_w) || !c.beta.allFinite()) {
    fail(ErrorCode::NonFiniteState, "prior evaluated at a non-finite state");
  }
  const bool with_g = has_g(spec.kind());
  if (with_g != state.g.has_value()) {
    fail(ErrorCode::InvalidArgument, "g must be present exactly for the g and hybrid priors");
  }
  const double g = state.g.value_or(1.0);
  if (with_g && (!std::isfinite(g) || g <= 0.0)) {
    fail(ErrorCode::NonFiniteState, "g must be positive and finite");
  }

  const Eigen::VectorXd theta = c.packed();
  PriorValue out;
  out.grad = Eigen::VectorXd::Zero(p + 1 + (with_g ? 1 : 0));
  const double core = spec.log_density_fixed_g(
      {theta.data(), static_cast<std::size_t>(theta.size())}, g,
      {out.grad.data(), static_cast<std::size_t>(p + 1)});
  if (!std::isfinite(core)) {
    out.value = -std::numeric_limits<double>::infinity();
    out.finite = false;
    out.grad.setZero();
    return out;
  }

  const double pd = static_cast<double>(p);
  double value = core - 0.5 * pd * kLog2Pi - 0.5 * spec.log_det_sigma_c();
  if (!has_pmp(spec.kind())) value -= 0.5 * (kLog2Pi + std::log(spec.tau2()));
  if (with_g) {
    const double a = spec.g_shape();
    const double b = spec.g_scale();
    const double q = spec.quad_form({theta.data() + 1, static_cast<std::size_t>(p)});
    const double log_g = std::log(g);
    value += -0.5 * pd * log_g;
    value += a * std::log(b) - std::lgamma(a) - (a + 1.0) * log_g - b / g;
    value += log_g;  // Jacobian of g = exp(log g)
    out.grad(p + 1) = -0.5 * pd - a + 0.5 * q / g + b / g;
  }
  out.value = value;
  return out;
}

Eigen::VectorXd orthogonalize_treatment(const DiscordantDiffs& d) {
  const Eigen::Index n = d.delta_x.rows();
  if (n == 0) {
    fail(ErrorCode::NoDiscordantPairs, "cannot orthogonalize an empty treatment vector");
  }
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  if (d.delta_x.cols() == 0) return ones;
  const Eigen::MatrixXd gram = d.delta_x.transpose() * d.delta_x;
  const Eigen::VectorXd rhs = d.delta_x.transpose() * ones;
  Eigen::VectorXd coef;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (ldlt.info() == Eigen::Success && ldlt.isPositive() && ldlt.rcond() > 1e-12) {
    coef = ldlt.solve(rhs);
  } else {
    // Minimum-norm solution of the normal equations.
    coef = gram.completeOrthogonalDecomposition().solve(rhs);
  }
  return ones - d.delta_x * coef;
}

double fisher_info_ww(const Coefficients& c, const DiscordantDiffs& d,
                      const Eigen::VectorXd& w_tilde) {
  if (static_cast<std::size_t>(w_tilde.size()) != d.n_pairs() ||
      static_cast<std::size_t>(c.beta.size()) != d.n_covariates()) {
    fail(ErrorCode::DimensionMismatch, "w_tilde / coefficient dimensions disagree with the pairs");
  }
  const PairData pd(d);
  const Eigen::VectorXd w2 = w_tilde.array().square();
  const Eigen::VectorXd theta = c.packed();
  Eigen::VectorXd grad(theta.size());
  return kernels::info_ww_grad(pd.block(), w2.data(), theta(0), theta.data() + 1,
                               grad.data());
}

double g_conditional_draw(std::span<const double> beta, const PriorSpec& spec, Rng& rng) {
  if (!has_g(spec.kind())) {
    fail(ErrorCode::InvalidArgument, "g is only sampled for the g and hybrid priors");
  }
  const double shape = spec.g_shape() + 0.5 * static_cast<double>(spec.n_covariates());
  const double scale = spec.g_scale() + 0.5 * spec.quad_form(beta);
  std::gamma_distribution<double> precision(shape, 1.0 / scale);
  return 1.0 / precision(rng);
}

}  // namespace bclr
