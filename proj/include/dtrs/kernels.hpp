#pragma once

// Data-parallel arithmetic used by the per-observation inner loops.
//
// Every kernel has a scalar reference implementation; vectorized variants
// (AVX2+FMA on x86-64, NEON on AArch64) are selected once at runtime from CPU
// features. The DTRS_KERNELS environment variable ("scalar", "avx2", "neon")
// overrides detection. Vector variants may differ from the reference by
// rounding only (fused multiply-add and reduction order).

#include <cstddef>
#include <span>
#include <string_view>

namespace dtrs::kernels {

enum class Backend { scalar, avx2, neon };

std::string_view backend_name(Backend backend) noexcept;
bool backend_supported(Backend backend) noexcept;

Backend active_backend() noexcept;
// Throws dtrs::Error(config) if the backend is not available on this CPU.
void set_backend(Backend backend);

// Parses a backend name; returns false on unknown names.
bool parse_backend(std::string_view name, Backend& out) noexcept;

struct KernelTable {
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum_squares)(const double* x, std::size_t n);
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  void (*multiply)(const double* a, const double* b, double* out, std::size_t n);
  void (*multiply_add)(const double* a, const double* b, double* out, std::size_t n);
  void (*multiply_subtract)(const double* a, const double* b, double* out, std::size_t n);
  // Upper triangle of the row-major dim x dim matrix gram += x x^T.
  void (*rank1_update)(double* gram, std::size_t dim, const double* x);
};

const KernelTable& table(Backend backend);
const KernelTable& active() noexcept;

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline double sum_squares(std::span<const double> x) {
  return active().sum_squares(x.data(), x.size());
}

// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

// out = a * b (elementwise)
inline void multiply(std::span<const double> a, std::span<const double> b,
                     std::span<double> out) {
  active().multiply(a.data(), b.data(), out.data(), a.size());
}

// out += a * b (elementwise)
inline void multiply_add(std::span<const double> a, std::span<const double> b,
                         std::span<double> out) {
  active().multiply_add(a.data(), b.data(), out.data(), a.size());
}

// out -= a * b (elementwise)
inline void multiply_subtract(std::span<const double> a, std::span<const double> b,
                              std::span<double> out) {
  active().multiply_subtract(a.data(), b.data(), out.data(), a.size());
}

inline void rank1_update(std::span<double> gram, std::size_t dim,
                         std::span<const double> x) {
  active().rank1_update(gram.data(), dim, x.data());
}

// Copies the upper triangle of a row-major square matrix into the lower one.
void symmetrize_upper(std::span<double> gram, std::size_t dim) noexcept;

namespace detail {
const KernelTable& scalar_table() noexcept;
const KernelTable* avx2_table() noexcept;
const KernelTable* neon_table() noexcept;
}  // namespace detail

}  // namespace dtrs::kernels
