#include "dtrs/kernels.hpp"

namespace dtrs::kernels::detail {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double sum_squares_scalar(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * x[i];
  return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void multiply_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void multiply_add_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] += a[i] * b[i];
}

void multiply_subtract_scalar(const double* a, const double* b, double* out,
                              std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] -= a[i] * b[i];
}

void rank1_update_scalar(double* gram, std::size_t dim, const double* x) {
  for (std::size_t i = 0; i < dim; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    double* row = gram + i * dim;
    for (std::size_t j = i; j < dim; ++j) row[j] += xi * x[j];
  }
}

}  // namespace

const KernelTable& scalar_table() noexcept {
  static const KernelTable t{dot_scalar,          sum_squares_scalar,
                             axpy_scalar,         multiply_scalar,
                             multiply_add_scalar, multiply_subtract_scalar,
                             rank1_update_scalar};
  return t;
}

}  // namespace dtrs::kernels::detail
