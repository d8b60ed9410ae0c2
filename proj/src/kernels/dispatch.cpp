#include <atomic>
#include <cstdlib>
#include <string>

#include "dtrs/error.hpp"
#include "dtrs/kernels.hpp"

namespace dtrs::kernels {
namespace {

bool cpu_has_avx2() noexcept {
#if (defined(__x86_64__) || defined(_M_X64)) && (defined(__GNUC__) || defined(__clang__))
  return detail::avx2_table() != nullptr && __builtin_cpu_supports("avx2") &&
         __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend detect() noexcept {
  if (const char* env = std::getenv("DTRS_KERNELS")) {
    Backend b;
    if (parse_backend(env, b) && backend_supported(b)) return b;
  }
  if (cpu_has_avx2()) return Backend::avx2;
  if (detail::neon_table() != nullptr) return Backend::neon;
  return Backend::scalar;
}

std::atomic<const KernelTable*>& current() noexcept {
  static std::atomic<const KernelTable*> ptr{&table(detect())};
  return ptr;
}

std::atomic<Backend>& current_backend() noexcept {
  static std::atomic<Backend> b{detect()};
  return b;
}

}  // namespace

std::string_view backend_name(Backend backend) noexcept {
  switch (backend) {
    case Backend::scalar: return "scalar";
    case Backend::avx2: return "avx2";
    case Backend::neon: return "neon";
  }
  return "scalar";
}

bool parse_backend(std::string_view name, Backend& out) noexcept {
  if (name == "scalar") { out = Backend::scalar; return true; }
  if (name == "avx2") { out = Backend::avx2; return true; }
  if (name == "neon") { out = Backend::neon; return true; }
  return false;
}

bool backend_supported(Backend backend) noexcept {
  switch (backend) {
    case Backend::scalar: return true;
    case Backend::avx2: return cpu_has_avx2();
    case Backend::neon: return detail::neon_table() != nullptr;
  }
  return false;
}

const KernelTable& table(Backend backend) {
  switch (backend) {
    case Backend::avx2:
      if (cpu_has_avx2()) return *detail::avx2_table();
      break;
    case Backend::neon:
      if (const auto* t = detail::neon_table()) return *t;
      break;
    case Backend::scalar:
      return detail::scalar_table();
  }
  fail(ErrorKind::config,
       "kernel backend '" + std::string(backend_name(backend)) + "' is not supported on this CPU");
}

Backend active_backend() noexcept { return current_backend().load(); }

void set_backend(Backend backend) {
  const KernelTable& t = table(backend);
  current().store(&t);
  current_backend().store(backend);
}

const KernelTable& active() noexcept { return *current().load(std::memory_order_relaxed); }

void symmetrize_upper(std::span<double> gram, std::size_t dim) noexcept {
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = 0; j < i; ++j) gram[i * dim + j] = gram[j * dim + i];
}

}  // namespace dtrs::kernels
