#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "dtrs/error.hpp"
#include "dtrs/spline_basis.hpp"

using namespace dtrs;

namespace {

std::vector<double> grid(std::size_t n) {
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<double>(i) / static_cast<double>(n - 1);
  return t;
}

double ls_error(const SplineBasis& b, double (*f)(double)) {
  const auto t = grid(400);
  const Eigen::MatrixXd x = b.design(t);
  Eigen::VectorXd y(static_cast<Eigen::Index>(t.size()));
  for (std::size_t i = 0; i < t.size(); ++i) y(static_cast<Eigen::Index>(i)) = f(t[i]);
  const Eigen::VectorXd c = x.colPivHouseholderQr().solve(y);
  return (x * c - y).squaredNorm();
}

}  // namespace

TEST(KnotCount, IntegerRoot) {
  EXPECT_EQ(knot_count(1000, 2), 2u);  // 1000^(1/7) = 2.68
  EXPECT_EQ(knot_count(128, 2), 2u);   // 2^7 exactly
  EXPECT_EQ(knot_count(127, 2), 1u);
  EXPECT_EQ(knot_count(2187, 2), 3u);  // 3^7
  EXPECT_EQ(knot_count(2186, 2), 2u);
  EXPECT_EQ(knot_count(32, 1), 2u);    // 32^(1/5)
  EXPECT_EQ(knot_count(1, 2), 1u);
}

TEST(TruncatedPower, HandValues) {
  const SplineBasis b(2, {0.5});
  const Eigen::VectorXd v = b.evaluate(0.75);
  ASSERT_EQ(v.size(), 4);
  EXPECT_DOUBLE_EQ(v(0), 1.0);
  EXPECT_DOUBLE_EQ(v(1), 0.75);
  EXPECT_DOUBLE_EQ(v(2), 0.5625);
  EXPECT_DOUBLE_EQ(v(3), 0.0625);
  EXPECT_DOUBLE_EQ(b.evaluate(0.25)(3), 0.0);
}

TEST(Basis, SizeAndBounds) {
  const SplineBasis b = build_basis(3, 4, KnotPlacement::equispaced);
  EXPECT_EQ(b.size(), 8u);
  EXPECT_NEAR(b.knots()[0], 0.2, 1e-15);
  EXPECT_THROW(b.evaluate(1.5), Error);
  EXPECT_THROW(b.evaluate(-0.1), Error);
  EXPECT_THROW(SplineBasis(2, {0.6, 0.4}), Error);
  EXPECT_THROW(SplineBasis(2, {0.0}), Error);
}

TEST(Basis, QuasiUniformRatio) {
  EXPECT_NEAR(SplineBasis(2, {0.25, 0.5, 0.75}).quasi_uniform_ratio(), 1.0, 1e-12);
  EXPECT_NEAR(SplineBasis(2, {0.1, 0.5}).quasi_uniform_ratio(), 5.0, 1e-12);
}

TEST(Basis, ConstantCoefficients) {
  for (BasisFamily fam : {BasisFamily::truncated_power, BasisFamily::bspline}) {
    const SplineBasis b(2, {0.2, 0.45, 0.8}, fam);
    const Eigen::VectorXd c = b.constant_coefficients();
    for (double t : grid(23)) EXPECT_NEAR(c.dot(b.evaluate(t)), 1.0, 1e-12);
  }
}

TEST(Basis, BsplinePartitionOfUnityAndSameSpan) {
  const std::vector<double> knots{0.15, 0.4, 0.7};
  const SplineBasis tp(2, knots), bs(2, knots, BasisFamily::bspline);
  const auto t = grid(57);
  const Eigen::MatrixXd xt = tp.design(t), xb = bs.design(t);
  for (Eigen::Index i = 0; i < xb.rows(); ++i) {
    EXPECT_NEAR(xb.row(i).sum(), 1.0, 1e-12);
    EXPECT_GE(xb.row(i).minCoeff(), -1e-15);
  }
  // Each family reproduces the other exactly in least squares.
  const Eigen::MatrixXd c = xt.colPivHouseholderQr().solve(xb);
  EXPECT_LT((xt * c - xb).norm(), 1e-10);
}

TEST(Basis, QuantileKnots) {
  std::vector<double> times;
  for (int i = 0; i < 100; ++i) times.push_back((i / 99.0) * (i / 99.0));
  const SplineBasis b = build_basis(2, 3, KnotPlacement::quantile, times);
  ASSERT_EQ(b.knots().size(), 3u);
  EXPECT_NEAR(b.knots()[1], 0.25, 0.02);
  for (std::size_t i = 1; i < 3; ++i) EXPECT_GT(b.knots()[i], b.knots()[i - 1]);
  // Collisions get nudged apart.
  std::vector<double> tied(48, 0.3);
  EXPECT_THROW(build_basis(2, 3, KnotPlacement::quantile, tied), Error);
  tied.push_back(0.1);
  tied.push_back(0.9);
  const SplineBasis nudged = build_basis(2, 3, KnotPlacement::quantile, tied);
  for (std::size_t i = 1; i < 3; ++i) EXPECT_GT(nudged.knots()[i], nudged.knots()[i - 1]);
}

TEST(Basis, ReproducesPiecewiseQuadratic) {
  const SplineBasis b(2, {0.5});
  auto f = +[](double t) { return t < 0.5 ? 1 + t * t : 1 + t * t + 3 * (t - 0.5) * (t - 0.5); };
  EXPECT_LT(ls_error(b, f), 1e-20);
}

TEST(Basis, ErrorDecreasesWithKnots) {
  auto f = +[](double t) { return std::sin(0.3 * std::numbers::pi * t) + std::cos(5 * t); };
  double prev = INFINITY;
  for (std::size_t a = 0; a <= 6; ++a) {
    const double e = ls_error(build_basis(2, a, KnotPlacement::equispaced), f);
    EXPECT_LT(e, prev) << a;
    prev = e;
  }
}
