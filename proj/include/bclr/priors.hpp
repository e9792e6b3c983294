#pragma once

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "bclr/clr.hpp"
#include "bclr/data.hpp"
#include "bclr/rng.hpp"

namespace bclr {

enum class PriorKind { Naive, G, Pmp, Hybrid };

inline bool has_g(PriorKind k) noexcept {
  return k == PriorKind::G || k == PriorKind::Hybrid;
}
inline bool has_pmp(PriorKind k) noexcept {
  return k == PriorKind::Pmp || k == PriorKind::Hybrid;
}

inline constexpr double kDefaultTau2 = 1e4;

/// Prior over (beta_w, beta[, g]) built from the pre-model.
///
/// Naive : N(beta; b_C, Sigma_C) N(beta_w; 0, tau2)
/// G     : N(beta; b_C, g Sigma_C) N(beta_w; 0, tau2) InvGamma(g; 1/2, |D|/2)
/// Pmp   : sqrt(I_ww(beta_w, beta)) N(beta; b_C, Sigma_C), flat in beta_w
/// Hybrid: sqrt(I_ww(beta_w, beta)) x G
///
/// InvGamma(g; a, b) has density proportional to g^{-a-1} exp(-b / g).
class PriorSpec {
 public:
  /// `diffs` supplies |D| and, for Pmp/Hybrid, the design of I_ww.
  PriorSpec(PriorKind kind, Eigen::VectorXd b_c, Eigen::MatrixXd sigma_c,
            const DiscordantDiffs& diffs, double tau2 = kDefaultTau2);

  PriorKind kind() const noexcept { return kind_; }
  const Eigen::VectorXd& b_c() const noexcept { return b_c_; }
  const Eigen::MatrixXd& sigma_c() const noexcept { return sigma_c_; }
  const Eigen::MatrixXd& sigma_c_inv() const noexcept { return sigma_inv_; }
  double log_det_sigma_c() const noexcept { return log_det_sigma_; }
  double tau2() const noexcept { return tau2_; }
  std::size_t n_discordant() const noexcept { return n_discordant_; }
  std::size_t n_covariates() const noexcept {
    return static_cast<std::size_t>(b_c_.size());
  }
  /// Orthogonalized treatment; empty unless Pmp/Hybrid.
  const Eigen::VectorXd& w_tilde() const noexcept { return w_tilde_; }
  /// Replaces w_tilde (length must be |D|).
  void set_w_tilde(Eigen::VectorXd w_tilde);

  /// Inverse-gamma hyperprior on g.
  double g_shape() const noexcept { return 0.5; }
  double g_scale() const noexcept { return 0.5 * static_cast<double>(n_discordant_); }

  /// (beta - b_C)' Sigma_C^{-1} (beta - b_C)
  double quad_form(std::span<const double> beta) const;

  /// Log density in (beta_w, beta) for a fixed g (ignored unless the kind
  /// has g), up to terms constant in (beta_w, beta). `grad` (length p+1) is
  /// overwritten. Returns -infinity when I_ww vanishes.
  double log_density_fixed_g(std::span<const double> theta, double g,
                             std::span<double> grad) const;

  /// I_ww and its gradient in (beta_w, beta).
  double info_ww(std::span<const double> theta, std::span<double> grad) const;

 private:
  PriorKind kind_;
  Eigen::VectorXd b_c_;
  Eigen::MatrixXd sigma_c_;
  Eigen::MatrixXd sigma_inv_;
  double log_det_sigma_ = 0.0;
  double tau2_;
  std::size_t n_discordant_;
  Eigen::VectorXd w_tilde_;
  std::vector<double> w2_;
  std::shared_ptr<const PairData> pairs_;
};

struct PriorState {
  Coefficients coefficients;
  std::optional<double> g;  // present iff the kind has g
};

struct PriorValue {
  double value = 0.0;
  /// (beta_w, beta[, log g])
  Eigen::VectorXd grad;
  /// false when value is -infinity (I_ww = 0); the sampler rejects such states.
  bool finite = true;
};

/// Full normalized log prior (improper beta_w margin for Pmp). For kinds
/// with g the density is expressed in log g, i.e. it includes the Jacobian
/// term + log g. Throws NonFiniteState on non-finite or inconsistent state.
PriorValue log_prior_and_grad(const PriorSpec& spec, const PriorState& state);

/// w~ = 1 - dx (dx'dx)^+ dx' 1: the treatment regressor (constant 1 in the
/// differenced design) residualized against the covariate differences.
Eigen::VectorXd orthogonalize_treatment(const DiscordantDiffs& d);

/// sum_i w~_i^2 q_i (1 - q_i).
double fisher_info_ww(const Coefficients& c, const DiscordantDiffs& d,
                      const Eigen::VectorXd& w_tilde);

/// Exact full conditional of g:
/// InvGamma(1/2 + p/2, |D|/2 + Q/2), Q the Sigma_C-quadratic form of beta - b_C.
double g_conditional_draw(std::span<const double> beta, const PriorSpec& spec,
                          Rng& rng);

}  // namespace bclr
