#include "bclr/premodel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bclr/error.hpp"
#include "bclr/math.hpp"

namespace bclr {

namespace {

using premodel_limits::kMaxIrls;
using premodel_limits::kScoreTol;
constexpr double kSeparationBound = 15.0;
constexpr double kMinRcond = 1e-13;

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd z(x.rows(), x.cols() + 1);
  z.col(0).setOnes();
  z.rightCols(x.cols()) = x;
  return z;
}

bool usable(const Eigen::LDLT<Eigen::MatrixXd>& ldlt) {
  return ldlt.info() == Eigen::Success && ldlt.isPositive() &&
         ldlt.rcond() >= kMinRcond;
}

double penalized_loglik(const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                        const Eigen::VectorXd& theta, const Eigen::VectorXd& pen) {
  const Eigen::VectorXd eta = z * theta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) ll += y(i) * eta(i) - softplus(eta(i));
  return ll - 0.5 * (pen.array() * theta.array().square()).sum();
}

}  // namespace

LrFit irls_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
               bool add_intercept, double ridge) {
  if (x.rows() != y.size()) {
    fail(ErrorCode::DimensionMismatch, "design rows and response length differ");
  }
  const Eigen::MatrixXd z = add_intercept ? with_intercept(x) : x;
  const Eigen::Index k = z.cols();
  if (z.rows() < k) {
    fail(ErrorCode::RankDeficient,
         "need at least " + std::to_string(k) + " rows, got " + std::to_string(z.rows()));
  }
  Eigen::VectorXd pen = Eigen::VectorXd::Constant(k, ridge);
  if (add_intercept) pen(0) = 0.0;

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(k);
  LrFit fit;
  auto information = [&](const Eigen::VectorXd& mu) {
    const Eigen::VectorXd w = (mu.array() * (1.0 - mu.array())).matrix();
    Eigen::MatrixXd info = z.transpose() * w.asDiagonal() * z;
    info.diagonal() += pen;
    return info;
  };
  auto fitted = [&](const Eigen::VectorXd& t) {
    Eigen::VectorXd mu = z * t;
    for (Eigen::Index i = 0; i < mu.size(); ++i) mu(i) = logistic(mu(i));
    return mu;
  };

  double ll = penalized_loglik(z, y, theta, pen);
  for (int iter = 0; iter < kMaxIrls; ++iter) {
    const Eigen::VectorXd mu = fitted(theta);
    const Eigen::VectorXd score =
        z.transpose() * (y - mu) - (pen.array() * theta.array()).matrix();
    if (score.cwiseAbs().maxCoeff() < kScoreTol) {
      fit.converged = true;
      break;
    }
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(information(mu));
    if (!usable(ldlt)) {
      fail(ErrorCode::RankDeficient,
           "X'WX is numerically singular at IRLS iteration " + std::to_string(iter));
    }
    const Eigen::VectorXd step = ldlt.solve(score);
    Eigen::VectorXd next = theta + step;
    double next_ll = penalized_loglik(z, y, next, pen);
    for (int h = 0; h < 30 && !(next_ll >= ll - 1e-12); ++h) {
      next = theta + std::ldexp(1.0, -(h + 1)) * step;
      next_ll = penalized_loglik(z, y, next, pen);
    }
    theta = next;
    ll = next_ll;
    fit.iterations = iter + 1;
    if (ridge == 0.0 && theta.cwiseAbs().maxCoeff() > kSeparationBound) {
      fail(ErrorCode::SeparationDetected,
           "logistic regression coefficients diverge (|coef| > 15): "
           "a covariate separates the outcome");
    }
  }
  if (!fit.converged) {
    const Eigen::VectorXd mu = fitted(theta);
    const Eigen::VectorXd score =
        z.transpose() * (y - mu) - (pen.array() * theta.array()).matrix();
    fit.converged = score.cwiseAbs().maxCoeff() < kScoreTol;
  }

  const Eigen::LDLT<Eigen::MatrixXd> ldlt(information(fitted(theta)));
  if (!usable(ldlt)) {
    fail(ErrorCode::RankDeficient, "X'WX is numerically singular at the optimum");
  }
  fit.covariance_full = ldlt.solve(Eigen::MatrixXd::Identity(k, k));
  fit.covariance_full = 0.5 * (fit.covariance_full + fit.covariance_full.transpose()).eval();
  if (add_intercept) {
    fit.intercept = theta(0);
    fit.coefficients = theta.tail(k - 1);
  } else {
    fit.coefficients = theta;
  }
  return fit;
}

GeeFit gee_fit_pairs(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                     const GeeOptions& opts) {
  if (x.rows() != y.size()) {
    fail(ErrorCode::DimensionMismatch, "design rows and response length differ");
  }
  if (x.rows() % 2 != 0) {
    fail(ErrorCode::MalformedPairing, "GEE clusters must have exactly two rows");
  }
  const Eigen::Index clusters = x.rows() / 2;
  if (clusters < 2) {
    fail(ErrorCode::InvalidArgument, "GEE needs at least two clusters");
  }
  const Eigen::MatrixXd z = with_intercept(x);
  const Eigen::Index q = z.cols();

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(q);
  double rho = opts.fixed_rho.value_or(0.0);
  Eigen::VectorXd mu(z.rows());
  Eigen::VectorXd sd(z.rows());
  Eigen::VectorXd resid(z.rows());  // Pearson residuals

  auto refresh = [&] {
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      mu(i) = logistic(z.row(i).dot(theta));
      sd(i) = std::sqrt(mu(i) * (1.0 - mu(i)));
      resid(i) = (y(i) - mu(i)) / sd(i);
    }
  };

  // For cluster k: U_k = Z_k' A^{1/2} R^{-1} e_k and
  // H_k = Z_k' A^{1/2} R^{-1} A^{1/2} Z_k, R the 2x2 exchangeable matrix.
  auto accumulate = [&](Eigen::MatrixXd& h, Eigen::VectorXd& u,
                        Eigen::MatrixXd* meat) {
    h.setZero(q, q);
    u.setZero(q);
    if (meat) meat->setZero(q, q);
    const double det = 1.0 - rho * rho;
    Eigen::Matrix2d rinv;
    rinv << 1.0, -rho, -rho, 1.0;
    rinv /= det;
    Eigen::MatrixXd zs(2, q);
    for (Eigen::Index k = 0; k < clusters; ++k) {
      const Eigen::Index a = 2 * k;
      zs.row(0) = sd(a) * z.row(a);
      zs.row(1) = sd(a + 1) * z.row(a + 1);
      const Eigen::Vector2d e(resid(a), resid(a + 1));
      const Eigen::MatrixXd zr = zs.transpose() * rinv;  // q x 2
      h.noalias() += zr * zs;
      const Eigen::VectorXd uk = zr * e;
      u += uk;
      if (meat) meat->noalias() += uk * uk.transpose();
    }
  };

  auto update_rho = [&] {
    if (opts.fixed_rho) return;
    const double phi = resid.squaredNorm() / static_cast<double>(z.rows());
    double cross = 0.0;
    for (Eigen::Index k = 0; k < clusters; ++k) cross += resid(2 * k) * resid(2 * k + 1);
    const double denom = static_cast<double>(clusters - q) * phi;
    double next = denom > 0.0 ? cross / denom : premodel_limits::kRhoClamp;
    if (!std::isfinite(next)) next = 0.0;
    rho = std::clamp(next, -premodel_limits::kRhoClamp, premodel_limits::kRhoClamp);
  };

  GeeFit fit;
  Eigen::MatrixXd h(q, q);
  Eigen::VectorXd u(q);
  refresh();
  for (int iter = 0; iter < opts.max_iter; ++iter) {
    accumulate(h, u, nullptr);
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
    if (!usable(ldlt)) {
      fail(ErrorCode::RankDeficient,
           "GEE information matrix is singular at iteration " + std::to_string(iter));
    }
    const Eigen::VectorXd step = ldlt.solve(u);
    theta += step;
    fit.iterations = iter + 1;
    if (theta.cwiseAbs().maxCoeff() > kSeparationBound) {
      fail(ErrorCode::SeparationDetected,
           "GEE coefficients diverge (|coef| > 15): a covariate separates the outcome");
    }
    refresh();
    const double old_rho = rho;
    update_rho();
    if (step.cwiseAbs().maxCoeff() < opts.tol && std::abs(rho - old_rho) < opts.tol) {
      fit.converged = true;
      break;
    }
  }

  Eigen::MatrixXd meat(q, q);
  accumulate(h, u, &meat);
  const Eigen::LDLT<Eigen::MatrixXd> bread_ldlt(h);
  if (!usable(bread_ldlt)) {
    fail(ErrorCode::SingularSandwich, "GEE bread matrix is singular");
  }
  const Eigen::MatrixXd bread = bread_ldlt.solve(Eigen::MatrixXd::Identity(q, q));
  Eigen::MatrixXd sandwich = bread * meat * bread;
  sandwich = 0.5 * (sandwich + sandwich.transpose()).eval();
  const Eigen::LLT<Eigen::MatrixXd> check(sandwich);
  if (check.info() != Eigen::Success || !sandwich.allFinite() ||
      check.rcond() < kMinRcond) {
    fail(ErrorCode::SingularSandwich, "GEE sandwich covariance is singular");
  }

  fit.intercept = theta(0);
  fit.coefficients = theta.tail(q - 1);
  fit.sandwich_covariance = std::move(sandwich);
  fit.rho_hat = rho;
  return fit;
}

Eigen::MatrixXd stabilize_spd(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd s = 0.5 * (m + m.transpose());
  if (s.size() == 0) return s;
  auto spd = [](const Eigen::MatrixXd& a) {
    const Eigen::LLT<Eigen::MatrixXd> llt(a);
    return a.allFinite() && llt.info() == Eigen::Success;
  };
  if (spd(s)) return s;
  const double base = premodel_limits::kJitterScale * std::abs(s.diagonal().mean());
  double jitter = base > 0.0 ? base : premodel_limits::kJitterScale;
  for (int esc = 0; esc <= premodel_limits::kJitterEscalations; ++esc) {
    Eigen::MatrixXd t = s;
    t.diagonal().array() += jitter;
    if (spd(t)) return t;
    jitter *= 10.0;
  }
  fail(ErrorCode::RankDeficient, "prior covariance is not positive definite after jitter");
}

PremodelFit premodel_concordant(const PairedDataset& data,
                                const PairPartition& part,
                                PremodelMethod method) {
  if (part.n_concordant() < 2) {
    fail(ErrorCode::InsufficientConcordant,
         "need at least 2 concordant pairs to build the prior, have " +
             std::to_string(part.n_concordant()));
  }
  const StackedRows rows = stack_pairs(data, part.concordant);
  const Eigen::Index p = rows.covariates.cols();

  PremodelFit out;
  out.method = method;
  Eigen::VectorXd coef;
  Eigen::MatrixXd cov_full;

  bool done = false;
  if (method == PremodelMethod::GEE) {
    try {
      GeeFit g = gee_fit_pairs(rows.covariates, rows.response);
      if (g.converged) {
        coef = g.coefficients;
        cov_full = g.sandwich_covariance;
        done = true;
      }
    } catch (const Error&) {
    }
    if (!done) out.fallback_used = true;
  }
  if (!done) {
    try {
      LrFit lr = irls_fit(rows.covariates, rows.response, true);
      if (lr.converged) {
        coef = lr.coefficients;
        cov_full = lr.covariance_full;
        done = true;
      }
    } catch (const Error&) {
    }
  }
  if (!done) {
    LrFit lr = irls_fit(rows.covariates, rows.response, true,
                        premodel_limits::kRidgeFallback);
    coef = lr.coefficients;
    cov_full = lr.covariance_full;
    out.fallback_used = true;
  }

  out.b_c = coef;
  out.sigma_c = stabilize_spd(cov_full.bottomRightCorner(p, p));
  return out;
}

namespace {

Eigen::MatrixXd treatment_design(const PairedDataset& data, const StackedRows& rows) {
  Eigen::MatrixXd x(rows.covariates.rows(), data.covariates.cols() + 1);
  x.col(0) = rows.treatment;
  x.rightCols(data.covariates.cols()) = rows.covariates;
  return x;
}

}  // namespace

WaldTest lr_treatment_test(const PairedDataset& data) {
  const PairPartition part = partition_pairs(data);
  std::vector<PairRows> all = part.concordant;
  all.insert(all.end(), part.discordant.begin(), part.discordant.end());
  const StackedRows rows = stack_pairs(data, all);
  const LrFit fit = irls_fit(treatment_design(data, rows), rows.response, true);
  WaldTest t;
  t.estimate = fit.coefficients(0);
  t.std_error = std::sqrt(fit.covariance_full(1, 1));
  t.p_value = two_sided_p(t.estimate / t.std_error);
  t.converged = fit.converged;
  return t;
}

WaldTest gee_treatment_test(const PairedDataset& data) {
  const PairPartition part = partition_pairs(data);
  std::vector<PairRows> all = part.concordant;
  all.insert(all.end(), part.discordant.begin(), part.discordant.end());
  const StackedRows rows = stack_pairs(data, all);
  const GeeFit fit = gee_fit_pairs(treatment_design(data, rows), rows.response);
  WaldTest t;
  t.estimate = fit.coefficients(0);
  t.std_error = std::sqrt(fit.sandwich_covariance(1, 1));
  t.p_value = two_sided_p(t.estimate / t.std_error);
  t.converged = fit.converged;
  return t;
}

}  // namespace bclr
