#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dtrs/error.hpp"
#include "dtrs/working_correlation.hpp"
#include "support.hpp"

using namespace dtrs;

namespace {

CorrelationSpec spec(CorrelationStructure s, double rho, double var) {
  CorrelationSpec c;
  c.structure = s;
  c.rho = rho;
  c.variance = var;
  return c;
}

}  // namespace

TEST(Correlation, MatrixMatchesDefinition) {
  for (auto s : {CorrelationStructure::independence, CorrelationStructure::exchangeable, CorrelationStructure::ar1}) {
    const CorrelationSpec c = spec(s, s == CorrelationStructure::independence ? 0.0 : 0.6, 1.0);
    const Eigen::MatrixXd r = correlation_matrix(c, 5);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) EXPECT_NEAR(r(i, j), oracle::dense_correlation(c, i, j), 1e-15);
  }
}

TEST(Correlation, WhitenerInvertsCovariance) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  for (auto s : {CorrelationStructure::independence, CorrelationStructure::exchangeable, CorrelationStructure::ar1})
    for (double rho : {0.0, 0.3, 0.85, -0.2}) {
      if (s == CorrelationStructure::independence && rho != 0.0) continue;
      if (s == CorrelationStructure::exchangeable && rho < 0.0) continue;
      const CorrelationSpec c = spec(s, rho, 1.7);
      const Whitener w(c, 4);
      for (std::size_t n : {1u, 2u, 7u, 20u}) {
        Eigen::MatrixXd x(n, 3);
        for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n01(rng);
        const Eigen::MatrixXd wx = w.apply(x);
        const Eigen::MatrixXd sigma = oracle::dense_covariance(c, n);
        // (L^{-1} x)^T (L^{-1} x) = x^T Sigma^{-1} x
        const Eigen::MatrixXd lhs = wx.transpose() * wx;
        const Eigen::MatrixXd rhs = x.transpose() * sigma.ldlt().solve(x);
        EXPECT_LT((lhs - rhs).norm(), 1e-10 * (1 + rhs.norm())) << int(s) << " " << rho << " " << n;
        const Eigen::MatrixXd l = w.cholesky_factor(n);
        EXPECT_LT((l * l.transpose() - sigma).norm(), 1e-12 * sigma.norm());
      }
    }
}

TEST(Correlation, RejectsInvalid) {
  EXPECT_THROW(spec(CorrelationStructure::ar1, 1.0, 1.0).validate(), Error);
  EXPECT_THROW(spec(CorrelationStructure::ar1, 0.5, 0.0).validate(), Error);
  EXPECT_THROW(correlation_matrix(spec(CorrelationStructure::exchangeable, -0.6, 1.0), 5), Error);
  EXPECT_THROW(parse_correlation("toeplitz"), Error);
  EXPECT_EQ(parse_correlation("ar1"), CorrelationStructure::ar1);
}

TEST(Correlation, EstimateNuisanceRecoversAr1) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n01;
  const double rho = 0.7, sd = 1.5;
  std::vector<std::vector<double>> res;
  for (int c = 0; c < 4000; ++c) {
    std::vector<double> e(12);
    e[0] = sd * n01(rng);
    for (std::size_t t = 1; t < e.size(); ++t) e[t] = rho * e[t - 1] + sd * std::sqrt(1 - rho * rho) * n01(rng);
    res.push_back(e);
  }
  const CorrelationSpec est = estimate_nuisance(res, CorrelationStructure::ar1);
  EXPECT_NEAR(est.rho, rho, 0.02);
  EXPECT_NEAR(est.variance, sd * sd, 0.05);
  const CorrelationSpec ind = estimate_nuisance(res, CorrelationStructure::independence);
  EXPECT_EQ(ind.rho, 0.0);
}

TEST(Correlation, EstimateNuisanceClamps) {
  std::vector<std::vector<double>> res(50, std::vector<double>{1.0, 1.0, 1.0});
  const CorrelationSpec est = estimate_nuisance(res, CorrelationStructure::ar1);
  EXPECT_LE(est.rho, 0.99);
}

TEST(Correlation, GridLagWhitenerInvertsCovariance) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  const CorrelationSpec c = [] {
    CorrelationSpec s = spec(CorrelationStructure::ar1, 0.85, 1.3);
    s.lag = LagScale::grid;
    return s;
  }();
  const Whitener w(c);
  const std::vector<double> grid{0, 1, 4, 5, 9, 17};
  const std::size_t n = grid.size();
  Eigen::MatrixXd sigma(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) sigma(i, j) = 1.3 * std::pow(0.85, std::abs(grid[i] - grid[j]));
  Eigen::MatrixXd x(n, 2);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n01(rng);
  const Eigen::MatrixXd wx = w.apply(x, grid.data());
  const Eigen::MatrixXd rhs = x.transpose() * sigma.ldlt().solve(x);
  EXPECT_LT((wx.transpose() * wx - rhs).norm(), 1e-10 * (1 + rhs.norm()));
  const Eigen::MatrixXd l = w.cholesky_factor(n, grid.data());
  EXPECT_LT((l * l.transpose() - sigma).norm(), 1e-12 * sigma.norm());
  EXPECT_THROW(w.apply(x), Error);
  // Consecutive grid points reduce to observation lags.
  const std::vector<double> dense{0, 1, 2, 3, 4, 5};
  CorrelationSpec obs = c;
  obs.lag = LagScale::observation;
  EXPECT_LT((w.apply(x, dense.data()) - Whitener(obs).apply(x)).norm(), 1e-12);
}

TEST(Correlation, EstimateNuisanceGridLagSkipsMissingTimes) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> unif;
  const double rho = 0.85;
  std::vector<std::vector<double>> res, grid;
  for (int c = 0; c < 20000; ++c) {
    double e = n01(rng);
    std::vector<double> r, g;
    for (int t = 0; t < 20; ++t) {
      if (t > 0) e = rho * e + std::sqrt(1 - rho * rho) * n01(rng);
      if (unif(rng) < 0.25) {
        r.push_back(e);
        g.push_back(t);
      }
    }
    res.push_back(r);
    grid.push_back(g);
  }
  const CorrelationSpec est = estimate_nuisance(res, CorrelationStructure::ar1, LagScale::grid, grid);
  EXPECT_EQ(est.lag, LagScale::grid);
  EXPECT_NEAR(est.rho, rho, 0.02);
  // Counting observation positions instead understates the correlation.
  EXPECT_LT(estimate_nuisance(res, CorrelationStructure::ar1).rho, 0.75);
  EXPECT_THROW(parse_lag_scale("hours"), Error);
}
