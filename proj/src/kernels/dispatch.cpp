#include <atomic>

#include "bclr/error.hpp"
#include "bclr/kernels.hpp"

namespace bclr::kernels {

#ifndef BCLR_HAVE_AVX2
namespace avx2 {
double clr_value_grad(const PairBlock& b, double beta_w, const double* beta,
                      double* grad) {
  return scalar::clr_value_grad(b, beta_w, beta, grad);
}
double info_ww_grad(const PairBlock& b, const double* w2, double beta_w,
                    const double* beta, double* grad) {
  return scalar::info_ww_grad(b, w2, beta_w, beta, grad);
}
}  // namespace avx2
#endif

bool avx2_available() noexcept {
#if defined(BCLR_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  static const bool ok =
      __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return ok;
#else
  return false;
#endif
}

namespace {

Backend detect() noexcept {
  return avx2_available() ? Backend::Avx2 : Backend::Scalar;
}

std::atomic<Backend>& current() noexcept {
  static std::atomic<Backend> backend{detect()};
  return backend;
}

}  // namespace

Backend active_backend() noexcept { return current().load(std::memory_order_relaxed); }

void set_backend(Backend backend) {
  if (backend == Backend::Avx2 && !avx2_available()) {
    fail(ErrorCode::InvalidArgument, "AVX2 kernels are not available on this CPU");
  }
  current().store(backend, std::memory_order_relaxed);
}

std::string_view backend_name(Backend backend) noexcept {
  return backend == Backend::Avx2 ? "avx2" : "scalar";
}

double clr_value_grad(const PairBlock& b, double beta_w, const double* beta,
                      double* grad) {
  if (active_backend() == Backend::Avx2) {
    return avx2::clr_value_grad(b, beta_w, beta, grad);
  }
  return scalar::clr_value_grad(b, beta_w, beta, grad);
}

double info_ww_grad(const PairBlock& b, const double* w2, double beta_w,
                    const double* beta, double* grad) {
  if (active_backend() == Backend::Avx2) {
    return avx2::info_ww_grad(b, w2, beta_w, beta, grad);
  }
  return scalar::info_ww_grad(b, w2, beta_w, beta, grad);
}

}  // namespace bclr::kernels
