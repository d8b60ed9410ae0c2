#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "dtrs/error.hpp"
#include "dtrs/kernels.hpp"
#include "dtrs/solver.hpp"
#include "support.hpp"

using namespace dtrs;
namespace k = dtrs::kernels;

namespace {

std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

std::vector<k::Backend> vector_backends() {
  std::vector<k::Backend> out;
  for (k::Backend b : {k::Backend::avx2, k::Backend::neon})
    if (k::backend_supported(b)) out.push_back(b);
  return out;
}

double scale_of(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 1.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] * b[i]);
  return s;
}

// Restores the detected backend when a test switches it.
struct BackendGuard {
  k::Backend saved = k::active_backend();
  ~BackendGuard() { k::set_backend(saved); }
};

}  // namespace

TEST(Kernels, ScalarReferenceValues) {
  const auto& s = k::table(k::Backend::scalar);
  const double a[] = {1, 2, 3}, b[] = {4, 5, 6};
  EXPECT_EQ(s.dot(a, b, 3), 32.0);
  EXPECT_EQ(s.sum_squares(a, 3), 14.0);
  double y[] = {1, 1, 1};
  s.axpy(2.0, a, y, 3);
  EXPECT_EQ(y[2], 7.0);
  double out[3];
  s.multiply(a, b, out, 3);
  EXPECT_EQ(out[1], 10.0);
  s.multiply_add(a, b, out, 3);
  EXPECT_EQ(out[1], 20.0);
  s.multiply_subtract(a, b, out, 3);
  EXPECT_EQ(out[1], 10.0);
  double g[9] = {};
  s.rank1_update(g, 3, a);
  EXPECT_EQ(g[0 * 3 + 2], 3.0);
  EXPECT_EQ(g[1 * 3 + 1], 4.0);
  EXPECT_EQ(g[2 * 3 + 0], 0.0);  // lower triangle untouched
}

TEST(Kernels, VectorVariantsMatchScalar) {
  const auto& ref = k::table(k::Backend::scalar);
  std::mt19937_64 rng(5);
  for (k::Backend backend : vector_backends()) {
    const auto& v = k::table(backend);
    for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 7u, 8u, 15u, 16u, 17u, 63u, 64u, 100u, 1001u}) {
      const auto a = random_vector(rng, n), b = random_vector(rng, n);
      const double tol = 1e-14 * scale_of(a, b);
      EXPECT_NEAR(v.dot(a.data(), b.data(), n), ref.dot(a.data(), b.data(), n), tol) << n;
      EXPECT_NEAR(v.sum_squares(a.data(), n), ref.sum_squares(a.data(), n), tol) << n;

      auto y1 = b, y2 = b;
      ref.axpy(0.37, a.data(), y1.data(), n);
      v.axpy(0.37, a.data(), y2.data(), n);
      for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(y1[i], y2[i], 1e-15 * (1 + std::abs(y1[i])));

      std::vector<double> o1(n, 0.5), o2(n, 0.5);
      ref.multiply_add(a.data(), b.data(), o1.data(), n);
      v.multiply_add(a.data(), b.data(), o2.data(), n);
      ref.multiply_subtract(b.data(), b.data(), o1.data(), n);
      v.multiply_subtract(b.data(), b.data(), o2.data(), n);
      for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(o1[i], o2[i], 1e-14 * (1 + std::abs(o1[i])));
      ref.multiply(a.data(), b.data(), o1.data(), n);
      v.multiply(a.data(), b.data(), o2.data(), n);
      for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(o1[i], o2[i]);
    }
    for (std::size_t dim : {1u, 2u, 3u, 4u, 5u, 9u, 13u, 17u, 33u}) {
      const auto x = random_vector(rng, dim);
      std::vector<double> g1(dim * dim, 0.25), g2 = g1;
      for (int rep = 0; rep < 3; ++rep) {
        ref.rank1_update(g1.data(), dim, x.data());
        v.rank1_update(g2.data(), dim, x.data());
      }
      for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = 0; j < dim; ++j) {
          if (j >= i)
            EXPECT_NEAR(g1[i * dim + j], g2[i * dim + j], 1e-14 * (1 + std::abs(g1[i * dim + j])));
          else
            EXPECT_EQ(g2[i * dim + j], 0.25);
        }
    }
  }
}

TEST(Kernels, BackendSelection) {
  BackendGuard guard;
  k::Backend b;
  EXPECT_TRUE(k::parse_backend("scalar", b));
  EXPECT_EQ(b, k::Backend::scalar);
  EXPECT_FALSE(k::parse_backend("sse9", b));
  k::set_backend(k::Backend::scalar);
  EXPECT_EQ(k::active_backend(), k::Backend::scalar);
  for (k::Backend v : {k::Backend::avx2, k::Backend::neon})
    if (!k::backend_supported(v)) {
      EXPECT_THROW(k::set_backend(v), Error);
    }
}

TEST(Kernels, FitAgreesAcrossBackends) {
  BackendGuard guard;
  const auto in = oracle::random_instance(31, {.dims = {6, 4, 6}, .groups = {2, 2, 2}});
  SolverOptions opt;
  opt.hyper.rank = 2;
  opt.hyper.lambda = 0.5;
  opt.hyper.max_iter = 30;
  k::set_backend(k::Backend::scalar);
  const FitResult ref = fit(in.tensor, in.scheme, in.bases, in.corr, opt);
  for (k::Backend backend : vector_backends()) {
    k::set_backend(backend);
    const FitResult v = fit(in.tensor, in.scheme, in.bases, in.corr, opt);
    ASSERT_EQ(ref.report.objective_trace.size(), v.report.objective_trace.size());
    EXPECT_NEAR(ref.report.objective_trace.back(), v.report.objective_trace.back(),
                1e-8 * ref.report.objective_trace.back());
  }
}
