#pragma once

#include <optional>

#include <Eigen/Dense>

#include "bclr/clr.hpp"
#include "bclr/data.hpp"

namespace bclr {

/// Logistic regression fit by iteratively reweighted least squares.
struct LrFit {
  double intercept = 0.0;
  Eigen::VectorXd coefficients;
  Eigen::MatrixXd covariance_full;  // includes the intercept row/col first when fitted
  bool converged = false;
  bool fallback_used = false;
  int iterations = 0;
};

/// Maximizes the independent-Bernoulli likelihood. `ridge` penalizes
/// 0.5 * ridge * |coefficients|^2 (never the intercept); with ridge > 0 the
/// separation bound is not enforced. Throws SeparationDetected or
/// RankDeficient.
LrFit irls_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
               bool add_intercept, double ridge = 0.0);

/// GEE for clusters of exactly two consecutive rows with an exchangeable
/// working correlation.
struct GeeFit {
  double intercept = 0.0;
  Eigen::VectorXd coefficients;
  Eigen::MatrixXd sandwich_covariance;  // intercept first
  double rho_hat = 0.0;
  bool converged = false;
  bool fallback_used = false;
  int iterations = 0;
};

struct GeeOptions {
  std::optional<double> fixed_rho;  // skip the moment update when set
  int max_iter = 100;
  double tol = 1e-8;
};

/// Rows 2k and 2k+1 of `x` form cluster k. An intercept is always added.
/// Throws SeparationDetected, SingularSandwich or RankDeficient.
GeeFit gee_fit_pairs(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                     const GeeOptions& opts = {});

enum class PremodelMethod { LR, GEE };

/// Prior hyperparameters estimated from the concordant pairs.
struct PremodelFit {
  Eigen::VectorXd b_c;
  Eigen::MatrixXd sigma_c;
  PremodelMethod method = PremodelMethod::LR;
  bool fallback_used = false;
};

namespace premodel_limits {
inline constexpr double kRidgeFallback = 1e-4;
inline constexpr double kJitterScale = 1e-8;
inline constexpr int kJitterEscalations = 3;
inline constexpr int kMaxIrls = 100;
inline constexpr double kScoreTol = 1e-8;
inline constexpr double kRhoClamp = 0.99;
}  // namespace premodel_limits

/// Fits intercept + covariates (no treatment column) on the concordant rows
/// and keeps the covariate block. GEE failures fall back to LR; LR failures
/// fall back to ridge-stabilized IRLS. Throws InsufficientConcordant when
/// fewer than two concordant pairs exist.
PremodelFit premodel_concordant(const PairedDataset& data,
                                const PairPartition& part,
                                PremodelMethod method);

/// Returns a symmetric copy that passes an LLT check, adding
/// kJitterScale * mean(diag) to the diagonal with up to three x10
/// escalations. Throws RankDeficient if that is not enough.
Eigen::MatrixXd stabilize_spd(const Eigen::MatrixXd& m);

/// LR on all 2n rows: intercept + treatment + covariates.
WaldTest lr_treatment_test(const PairedDataset& data);

/// GEE on all n pairs: intercept + treatment + covariates, sandwich SE.
WaldTest gee_treatment_test(const PairedDataset& data);

}  // namespace bclr
