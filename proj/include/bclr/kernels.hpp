#pragma once

// Inner loops over discordant pairs. Each kernel has a scalar reference
// implementation and, on x86-64, an AVX2+FMA variant selected at runtime.
// The variants are equivalence-tested against the reference.

#include <cstddef>
#include <string_view>

namespace bclr::kernels {

enum class Backend { Scalar, Avx2 };

/// Read-only view of the differenced design.
struct PairBlock {
  const double* dx = nullptr;    // column-major, leading dimension n
  const double* sign = nullptr;  // +1 if the treated member is the case, else -1
  std::size_t n = 0;             // pairs
  std::size_t p = 0;             // covariates
};

/// Conditional log-likelihood over the block. `grad` receives p+1 entries
/// ordered (beta_w, beta_1..beta_p) and is overwritten.
using ClrValueGradFn = double (*)(const PairBlock&, double beta_w,
                                  const double* beta, double* grad);

/// I = sum_i w2_i q_i (1 - q_i) with q_i the treated-is-case probability.
/// `grad` receives dI/d(beta_w, beta) and is overwritten.
using InfoWwGradFn = double (*)(const PairBlock&, const double* w2,
                                double beta_w, const double* beta,
                                double* grad);

namespace scalar {
double clr_value_grad(const PairBlock& b, double beta_w, const double* beta,
                      double* grad);
double info_ww_grad(const PairBlock& b, const double* w2, double beta_w,
                    const double* beta, double* grad);
}  // namespace scalar

namespace avx2 {
/// Only callable when `avx2_available()`.
double clr_value_grad(const PairBlock& b, double beta_w, const double* beta,
                      double* grad);
double info_ww_grad(const PairBlock& b, const double* w2, double beta_w,
                    const double* beta, double* grad);
}  // namespace avx2

bool avx2_available() noexcept;

/// Backend used by the dispatching entry points below. Defaults to the best
/// available one.
Backend active_backend() noexcept;

/// Throws bclr::Error(InvalidArgument) if the backend is not available.
void set_backend(Backend backend);

std::string_view backend_name(Backend backend) noexcept;

double clr_value_grad(const PairBlock& b, double beta_w, const double* beta,
                      double* grad);
double info_ww_grad(const PairBlock& b, const double* w2, double beta_w,
                    const double* beta, double* grad);

}  // namespace bclr::kernels
