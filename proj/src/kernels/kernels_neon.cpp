#include "dtrs/kernels.hpp"

#if defined(__aarch64__) && defined(__ARM_NEON)
#include <arm_neon.h>

namespace dtrs::kernels::detail {
namespace {

double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double s = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double sum_squares_neon(const double* x, std::size_t n) { return dot_neon(x, x, n); }

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void multiply_neon(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void multiply_add_neon(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(out + i, vfmaq_f64(vld1q_f64(out + i), vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] += a[i] * b[i];
}

void multiply_subtract_neon(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(out + i, vfmsq_f64(vld1q_f64(out + i), vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] -= a[i] * b[i];
}

void rank1_update_neon(double* gram, std::size_t dim, const double* x) {
  for (std::size_t i = 0; i < dim; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    axpy_neon(xi, x + i, gram + i * dim + i, dim - i);
  }
}

}  // namespace

const KernelTable* neon_table() noexcept {
  static const KernelTable t{dot_neon,          sum_squares_neon,
                             axpy_neon,         multiply_neon,
                             multiply_add_neon, multiply_subtract_neon,
                             rank1_update_neon};
  return &t;
}

}  // namespace dtrs::kernels::detail

#else

namespace dtrs::kernels::detail {
const KernelTable* neon_table() noexcept { return nullptr; }
}  // namespace dtrs::kernels::detail

#endif
