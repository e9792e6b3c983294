// Compiled with -mavx2 -mfma. Only entered after a runtime CPU check.

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "bclr/kernels.hpp"

namespace bclr::kernels::avx2 {

namespace {

constexpr std::size_t kLanes = 4;

// exp(x) for x in [-708, 0]. Cody-Waite reduction, degree-13 Taylor on
// |r| <= ln2/2; relative error around 1 ulp.
inline __m256d exp_nonpositive(__m256d x) {
  const __m256d log2e = _mm256_set1_pd(1.4426950408889634074);
  const __m256d ln2_hi = _mm256_set1_pd(6.93145751953125e-1);
  const __m256d ln2_lo = _mm256_set1_pd(1.42860682030941723212e-6);
  x = _mm256_max_pd(x, _mm256_set1_pd(-708.0));

  const __m256d n = _mm256_round_pd(_mm256_mul_pd(x, log2e),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, ln2_hi, x);
  r = _mm256_fnmadd_pd(n, ln2_lo, r);

  static constexpr double c[] = {
      1.0 / 6227020800.0, 1.0 / 479001600.0, 1.0 / 39916800.0,
      1.0 / 3628800.0,    1.0 / 362880.0,    1.0 / 40320.0,
      1.0 / 5040.0,       1.0 / 720.0,       1.0 / 120.0,
      1.0 / 24.0,         1.0 / 6.0,         0.5,
      1.0,                1.0};
  __m256d poly = _mm256_set1_pd(c[0]);
  for (std::size_t k = 1; k < std::size(c); ++k) {
    poly = _mm256_fmadd_pd(poly, r, _mm256_set1_pd(c[k]));
  }

  // 2^n: place (n + 1023) in the exponent field.
  const __m256d biased = _mm256_add_pd(n, _mm256_set1_pd(1023.0 + 4503599627370496.0));
  const __m256i bits = _mm256_slli_epi64(_mm256_castpd_si256(biased), 52);
  return _mm256_mul_pd(poly, _mm256_castsi256_pd(bits));
}

// log1p(e) for e in [0, 1] via 2*atanh(e / (2 + e)); no cancellation.
inline __m256d log1p_unit(__m256d e) {
  const __m256d f = _mm256_div_pd(e, _mm256_add_pd(_mm256_set1_pd(2.0), e));
  const __m256d f2 = _mm256_mul_pd(f, f);
  __m256d s = _mm256_set1_pd(1.0 / 33.0);
  for (int k = 15; k >= 0; --k) {
    s = _mm256_fmadd_pd(s, f2, _mm256_set1_pd(1.0 / (2.0 * k + 1.0)));
  }
  return _mm256_mul_pd(_mm256_add_pd(f, f), s);
}

inline double hsum(__m256d v) {
  alignas(32) double t[kLanes];
  _mm256_store_pd(t, v);
  return (t[0] + t[1]) + (t[2] + t[3]);
}

inline __m256d abs_pd(__m256d v) {
  return _mm256_andnot_pd(_mm256_set1_pd(-0.0), v);
}

inline __m256d linear_predictor(const PairBlock& b, std::size_t i,
                                double beta_w, const double* beta) {
  __m256d eta = _mm256_set1_pd(beta_w);
  for (std::size_t j = 0; j < b.p; ++j) {
    eta = _mm256_fmadd_pd(_mm256_loadu_pd(b.dx + j * b.n + i),
                          _mm256_set1_pd(beta[j]), eta);
  }
  return eta;
}

std::vector<__m256d>& accumulators(std::size_t count) {
  thread_local std::vector<__m256d> acc;
  acc.assign(count, _mm256_setzero_pd());
  return acc;
}

}  // namespace

double clr_value_grad(const PairBlock& b, double beta_w, const double* beta,
                      double* grad) {
  const std::size_t body = b.n - b.n % kLanes;
  std::vector<__m256d>& acc = accumulators(b.p + 2);  // [ll, d_beta_w, d_beta...]
  const __m256d zero = _mm256_setzero_pd();
  const __m256d one = _mm256_set1_pd(1.0);

  for (std::size_t i = 0; i < body; i += kLanes) {
    const __m256d sign = _mm256_loadu_pd(b.sign + i);
    const __m256d s = _mm256_mul_pd(sign, linear_predictor(b, i, beta_w, beta));
    const __m256d e = exp_nonpositive(_mm256_sub_pd(zero, abs_pd(s)));
    const __m256d softplus =
        _mm256_add_pd(_mm256_max_pd(_mm256_sub_pd(zero, s), zero), log1p_unit(e));
    acc[0] = _mm256_sub_pd(acc[0], softplus);

    const __m256d inv = _mm256_div_pd(one, _mm256_add_pd(one, e));
    const __m256d nonneg = _mm256_cmp_pd(s, zero, _CMP_GE_OQ);
    const __m256d tail = _mm256_blendv_pd(inv, _mm256_mul_pd(e, inv), nonneg);
    const __m256d r = _mm256_mul_pd(sign, tail);
    acc[1] = _mm256_add_pd(acc[1], r);
    for (std::size_t j = 0; j < b.p; ++j) {
      acc[j + 2] = _mm256_fmadd_pd(r, _mm256_loadu_pd(b.dx + j * b.n + i), acc[j + 2]);
    }
  }

  double ll = hsum(acc[0]);
  for (std::size_t k = 0; k <= b.p; ++k) grad[k] = hsum(acc[k + 1]);

  for (std::size_t i = body; i < b.n; ++i) {
    double eta = beta_w;
    for (std::size_t j = 0; j < b.p; ++j) eta += b.dx[j * b.n + i] * beta[j];
    const double s = b.sign[i] * eta;
    const double e = std::exp(-std::abs(s));
    ll -= std::max(-s, 0.0) + std::log1p(e);
    const double r = b.sign[i] * (s >= 0.0 ? e / (1.0 + e) : 1.0 / (1.0 + e));
    grad[0] += r;
    for (std::size_t j = 0; j < b.p; ++j) grad[j + 1] += r * b.dx[j * b.n + i];
  }
  return ll;
}

double info_ww_grad(const PairBlock& b, const double* w2, double beta_w,
                    const double* beta, double* grad) {
  const std::size_t body = b.n - b.n % kLanes;
  std::vector<__m256d>& acc = accumulators(b.p + 2);  // [info, d_beta_w, d_beta...]
  const __m256d zero = _mm256_setzero_pd();
  const __m256d one = _mm256_set1_pd(1.0);

  for (std::size_t i = 0; i < body; i += kLanes) {
    const __m256d eta = linear_predictor(b, i, beta_w, beta);
    const __m256d e = exp_nonpositive(_mm256_sub_pd(zero, abs_pd(eta)));
    const __m256d inv = _mm256_div_pd(one, _mm256_add_pd(one, e));
    const __m256d v = _mm256_mul_pd(_mm256_mul_pd(e, inv), inv);
    const __m256d mag = _mm256_mul_pd(_mm256_sub_pd(one, e), inv);
    const __m256d nonneg = _mm256_cmp_pd(eta, zero, _CMP_GE_OQ);
    const __m256d skew = _mm256_blendv_pd(mag, _mm256_sub_pd(zero, mag), nonneg);
    const __m256d wv = _mm256_mul_pd(_mm256_loadu_pd(w2 + i), v);
    acc[0] = _mm256_add_pd(acc[0], wv);
    const __m256d d = _mm256_mul_pd(wv, skew);
    acc[1] = _mm256_add_pd(acc[1], d);
    for (std::size_t j = 0; j < b.p; ++j) {
      acc[j + 2] = _mm256_fmadd_pd(d, _mm256_loadu_pd(b.dx + j * b.n + i), acc[j + 2]);
    }
  }

  double info = hsum(acc[0]);
  for (std::size_t k = 0; k <= b.p; ++k) grad[k] = hsum(acc[k + 1]);

  for (std::size_t i = body; i < b.n; ++i) {
    double eta = beta_w;
    for (std::size_t j = 0; j < b.p; ++j) eta += b.dx[j * b.n + i] * beta[j];
    const double e = std::exp(-std::abs(eta));
    const double inv = 1.0 / (1.0 + e);
    const double v = e * inv * inv;
    const double skew = (eta >= 0.0 ? -1.0 : 1.0) * (1.0 - e) * inv;
    info += w2[i] * v;
    const double d = w2[i] * skew * v;
    grad[0] += d;
    for (std::size_t j = 0; j < b.p; ++j) grad[j + 1] += d * b.dx[j * b.n + i];
  }
  return info;
}

}  // namespace bclr::kernels::avx2
