// Independent reference computations used only by the tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "bclr/data.hpp"

namespace oracle {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Conditional log-probability of the observed discordant outcomes, obtained
/// by enumerating the joint outcomes of each pair under an unconditional
/// logistic model with the given pair intercepts.
inline double enumerated_loglik(const bclr::DiscordantDiffs& d, double beta_w,
                                const Eigen::VectorXd& beta,
                                const Eigen::MatrixXd& x_control,
                                const std::vector<double>& intercepts) {
  double total = 0.0;
  for (std::size_t i = 0; i < d.n_pairs(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const Eigen::RowVectorXd xc = x_control.row(r);
    const Eigen::RowVectorXd xt = xc + d.delta_x.row(r);
    const double pt = sigmoid(intercepts[i] + beta_w + xt.dot(beta));
    const double pc = sigmoid(intercepts[i] + xc.dot(beta));
    const double treated_case = pt * (1.0 - pc);
    const double control_case = (1.0 - pt) * pc;
    const double num = d.case_is_treated[i] ? treated_case : control_case;
    total += std::log(num / (treated_case + control_case));
  }
  return total;
}

/// Central finite-difference gradient.
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double h = 1e-6) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd a = x, b = x;
    a(i) += h;
    b(i) -= h;
    g(i) = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

/// Max over coordinates of |a - b| / max(|b|, floor).
inline double max_rel_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                            double floor = 1.0) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a(i) - b(i)) / std::max(std::abs(b(i)), floor));
  }
  return worst;
}

/// Nelder-Mead maximizer with restarts; no derivatives.
inline Eigen::VectorXd nelder_mead_max(const std::function<double(const Eigen::VectorXd&)>& f,
                                       Eigen::VectorXd x0, double scale = 0.5,
                                       int restarts = 12) {
  const Eigen::Index n = x0.size();
  auto neg = [&](const Eigen::VectorXd& x) { return -f(x); };
  for (int rs = 0; rs < restarts; ++rs) {
    std::vector<Eigen::VectorXd> pts{x0};
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::VectorXd p = x0;
      p(i) += scale;
      pts.push_back(p);
    }
    std::vector<double> val;
    for (const auto& p : pts) val.push_back(neg(p));
    for (int it = 0; it < 20000; ++it) {
      std::vector<std::size_t> idx(pts.size());
      std::iota(idx.begin(), idx.end(), 0);
      std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return val[a] < val[b]; });
      std::vector<Eigen::VectorXd> sp;
      std::vector<double> sv;
      for (auto k : idx) {
        sp.push_back(pts[k]);
        sv.push_back(val[k]);
      }
      pts = sp;
      val = sv;
      if (std::abs(val.back() - val.front()) < 1e-15 * (1.0 + std::abs(val.front()))) {
        double spread = 0.0;
        for (const auto& p : pts) spread = std::max(spread, (p - pts[0]).cwiseAbs().maxCoeff());
        if (spread < 1e-10) break;
      }
      Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
      for (Eigen::Index i = 0; i < n; ++i) centroid += pts[static_cast<std::size_t>(i)];
      centroid /= static_cast<double>(n);
      const Eigen::VectorXd& worst = pts.back();
      const Eigen::VectorXd xr = centroid + (centroid - worst);
      const double fr = neg(xr);
      if (fr < val.front()) {
        const Eigen::VectorXd xe = centroid + 2.0 * (centroid - worst);
        const double fe = neg(xe);
        if (fe < fr) {
          pts.back() = xe;
          val.back() = fe;
        } else {
          pts.back() = xr;
          val.back() = fr;
        }
      } else if (fr < val[val.size() - 2]) {
        pts.back() = xr;
        val.back() = fr;
      } else {
        const Eigen::VectorXd xc = centroid + 0.5 * (worst - centroid);
        const double fc = neg(xc);
        if (fc < val.back()) {
          pts.back() = xc;
          val.back() = fc;
        } else {
          for (std::size_t k = 1; k < pts.size(); ++k) {
            pts[k] = pts[0] + 0.5 * (pts[k] - pts[0]);
            val[k] = neg(pts[k]);
          }
        }
      }
    }
    const auto best = static_cast<std::size_t>(
        std::min_element(val.begin(), val.end()) - val.begin());
    x0 = pts[best];
    scale *= 0.3;
    if (scale < 1e-7) scale = 1e-3;
  }
  return x0;
}

/// Bernoulli log-likelihood of a logistic model with intercept.
inline double logistic_loglik(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                              double intercept, const Eigen::VectorXd& beta) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double eta = intercept + x.row(i).dot(beta);
    ll += y(i) * eta - std::log1p(std::exp(eta));
  }
  return ll;
}

/// Random discordant differences with p covariates.
inline bclr::DiscordantDiffs random_diffs(std::mt19937_64& rng, int n, int p,
                                          double beta_w = 0.3) {
  std::normal_distribution<double> norm(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  bclr::DiscordantDiffs d;
  d.delta_x.resize(n, p);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) d.delta_x(i, j) = norm(rng);
    const double eta = beta_w + (p > 0 ? 0.5 * d.delta_x(i, 0) : 0.0);
    d.case_is_treated.push_back(unif(rng) < sigmoid(eta) ? 1 : 0);
    d.pair_id.push_back(std::to_string(i));
  }
  return d;
}

/// Random 1:1 paired dataset with p covariates and pair-level intercepts.
inline bclr::PairedDataset random_dataset(std::mt19937_64& rng, int n_pairs, int p,
                                          double beta_w = 0.5) {
  std::normal_distribution<double> norm(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  bclr::PairedDataset d;
  d.covariates.resize(2 * n_pairs, p);
  for (int i = 0; i < n_pairs; ++i) {
    const double alpha = norm(rng);
    const bool first_treated = unif(rng) < 0.5;
    for (int k = 0; k < 2; ++k) {
      const int r = 2 * i + k;
      const bool treated = (k == 0) == first_treated;
      double eta = alpha + (treated ? beta_w : 0.0);
      for (int j = 0; j < p; ++j) {
        d.covariates(r, j) = norm(rng);
        eta += 0.7 * d.covariates(r, j);
      }
      d.pair_id.push_back("p" + std::to_string(i));
      d.treatment.push_back(treated ? 1 : 0);
      d.response.push_back(unif(rng) < sigmoid(eta) ? 1 : 0);
    }
  }
  return d;
}

/// Conditional log-likelihood written directly from its definition.
inline double direct_clr_loglik(const bclr::DiscordantDiffs& d, double beta_w,
                                const Eigen::VectorXd& beta) {
  double ll = 0.0;
  for (std::size_t i = 0; i < d.n_pairs(); ++i) {
    const double eta = beta_w + d.delta_x.row(static_cast<Eigen::Index>(i)).dot(beta);
    const double q = sigmoid(eta);
    ll += std::log(d.case_is_treated[i] ? q : 1.0 - q);
  }
  return ll;
}

struct Moments {
  double mean = 0.0;
  double sd = 0.0;
};

/// Mean and sd of the first coordinate of a 2-dim density known up to a
/// constant, by a coarse grid pass followed by a dense grid around the mass.
inline Moments grid_moments_2d(const std::function<double(double, double)>& log_density,
                               double half_width = 30.0, int n = 801) {
  double c0 = 0.0, c1 = 0.0, w0 = half_width, w1 = half_width;
  Moments out;
  for (int pass = 0; pass < 2; ++pass) {
    const double h0 = 2 * w0 / (n - 1), h1 = 2 * w1 / (n - 1);
    std::vector<double> lp(static_cast<std::size_t>(n) * n);
    double top = -INFINITY;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const double v = log_density(c0 - w0 + i * h0, c1 - w1 + j * h1);
        lp[static_cast<std::size_t>(i) * n + j] = v;
        top = std::max(top, v);
      }
    }
    double z = 0, m0 = 0, s0 = 0, m1 = 0, s1 = 0;
    for (int i = 0; i < n; ++i) {
      const double x0 = c0 - w0 + i * h0;
      for (int j = 0; j < n; ++j) {
        const double x1 = c1 - w1 + j * h1;
        const double wgt = std::exp(lp[static_cast<std::size_t>(i) * n + j] - top);
        z += wgt;
        m0 += wgt * x0;
        s0 += wgt * x0 * x0;
        m1 += wgt * x1;
        s1 += wgt * x1 * x1;
      }
    }
    m0 /= z;
    m1 /= z;
    const double sd0 = std::sqrt(s0 / z - m0 * m0), sd1 = std::sqrt(s1 / z - m1 * m1);
    out = {m0, sd0};
    c0 = m0;
    c1 = m1;
    w0 = 12 * sd0;
    w1 = 12 * sd1;
  }
  return out;
}

/// z-scores of the sampled mean and sd against reference values, using
/// MC standard errors from the effective sample sizes of x and (x - mean)^2.
struct MomentZ {
  double mean_z = 0.0;
  double sd_z = 0.0;
};

inline MomentZ moment_z(const std::vector<std::vector<double>>& chains, const Moments& ref,
                        const std::function<double(const std::vector<std::vector<double>>&)>& ess) {
  double sum = 0.0, sum2 = 0.0;
  std::size_t n = 0;
  for (const auto& c : chains) {
    for (double v : c) {
      sum += v;
      sum2 += v * v;
      ++n;
    }
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  const double sd = std::sqrt(var);
  std::vector<std::vector<double>> sq = chains;
  double q_sum = 0.0, q_sum2 = 0.0;
  for (auto& c : sq) {
    for (double& v : c) {
      v = (v - mean) * (v - mean);
      q_sum += v;
      q_sum2 += v * v;
    }
  }
  const double q_mean = q_sum / n;
  const double se_mean = sd / std::sqrt(ess(chains));
  const double se_var = std::sqrt(q_sum2 / n - q_mean * q_mean) / std::sqrt(ess(sq));
  return {(mean - ref.mean) / se_mean, (sd - ref.sd) / (se_var / (2.0 * sd))};
}

/// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

/// Two-sample KS critical value at level 1%.
inline double ks_critical_1pct(std::size_t n, std::size_t m) {
  const double nn = static_cast<double>(n), mm = static_cast<double>(m);
  return 1.628 * std::sqrt((nn + mm) / (nn * mm));
}

}  // namespace oracle
