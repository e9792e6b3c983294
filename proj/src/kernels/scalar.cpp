#include <algorithm>
#include <cmath>

#include "bclr/kernels.hpp"

namespace bclr::kernels::scalar {

namespace {

inline double linear_predictor(const PairBlock& b, std::size_t i,
                               double beta_w, const double* beta) {
  double eta = beta_w;
  for (std::size_t j = 0; j < b.p; ++j) eta += b.dx[j * b.n + i] * beta[j];
  return eta;
}

}  // namespace

double clr_value_grad(const PairBlock& b, double beta_w, const double* beta,
                      double* grad) {
  std::fill(grad, grad + b.p + 1, 0.0);
  double ll = 0.0;
  for (std::size_t i = 0; i < b.n; ++i) {
    // s > 0 favours the observed configuration.
    const double s = b.sign[i] * linear_predictor(b, i, beta_w, beta);
    const double e = std::exp(-std::abs(s));
    ll -= std::max(-s, 0.0) + std::log1p(e);
    const double tail = s >= 0.0 ? e / (1.0 + e) : 1.0 / (1.0 + e);
    const double r = b.sign[i] * tail;
    grad[0] += r;
    for (std::size_t j = 0; j < b.p; ++j) grad[j + 1] += r * b.dx[j * b.n + i];
  }
  return ll;
}

double info_ww_grad(const PairBlock& b, const double* w2, double beta_w,
                    const double* beta, double* grad) {
  std::fill(grad, grad + b.p + 1, 0.0);
  double info = 0.0;
  for (std::size_t i = 0; i < b.n; ++i) {
    const double eta = linear_predictor(b, i, beta_w, beta);
    const double e = std::exp(-std::abs(eta));
    const double inv = 1.0 / (1.0 + e);
    const double v = e * inv * inv;                        // q(1-q)
    const double skew = (eta >= 0.0 ? -1.0 : 1.0) * (1.0 - e) * inv;  // 1-2q
    info += w2[i] * v;
    const double d = w2[i] * skew * v;
    grad[0] += d;
    for (std::size_t j = 0; j < b.p; ++j) grad[j + 1] += d * b.dx[j * b.n + i];
  }
  return info;
}

}  // namespace bclr::kernels::scalar
