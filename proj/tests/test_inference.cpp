#include <gtest/gtest.h>

#include <cmath>

#include "dtrs/error.hpp"
#include "dtrs/inference.hpp"
#include "dtrs/solver.hpp"
#include "sandwich_oracle.hpp"
#include "support.hpp"

using namespace dtrs;
using namespace dtrs::oracle;

TEST(NormalQuantile, KnownValues) {
  EXPECT_NEAR(normal_quantile(0.975), 1.959963984540054, 1e-12);
  EXPECT_NEAR(normal_quantile(0.5), 0.0, 1e-15);
  EXPECT_NEAR(normal_quantile(0.75), 0.6744897501960817, 1e-12);
  EXPECT_NEAR(normal_quantile(1e-10), -6.361340902404056, 1e-8);
  EXPECT_NEAR(normal_quantile(0.025), -normal_quantile(0.975), 1e-14);
  EXPECT_NEAR(interval_multiplier(0.95), 1.959963984540054, 1e-12);
  EXPECT_THROW(normal_quantile(0.0), Error);
  EXPECT_THROW(interval_multiplier(1.0), Error);
}

TEST(Sandwich, DesignRowReproducesPrediction) {
  const Instance in = random_instance(51);
  Eigen::VectorXd gamma(static_cast<Eigen::Index>(gamma_size(in.params)));
  Eigen::Index pos = 0;
  for (Eigen::Index j = 0; j < in.params.alpha.rows(); ++j)
    for (Eigen::Index m = 0; m < in.params.alpha.cols(); ++m) gamma(pos++) = in.params.alpha(j, m);
  for (Eigen::Index e = 0; e < in.params.beta.rows(); ++e)
    for (Eigen::Index m = 0; m < in.params.beta.cols(); ++m) gamma(pos++) = in.params.beta(e, m);
  for (const Cell& c : in.tensor.cells()) {
    const double t = c.series.back().time;
    EXPECT_NEAR(design_row(in.params, in.scheme, in.bases, c.index, t).dot(gamma),
                reference_prediction(in.params, in.scheme, in.bases, c.index, t), 1e-12);
  }
}

TEST(Sandwich, MatchesClusterRobustOracle) {
  for (std::uint64_t seed = 60; seed < 70; ++seed) {
    Instance in = random_instance(seed, {.dims = {3, 3, 4}, .groups = {2, 1, 2}, .max_obs = 4});
    const double dev = sandwich_relative_deviation(in);
    EXPECT_LT(dev, 1e-8) << seed;
  }
}

TEST(Sandwich, ExactFitGivesZeroCovariance) {
  Instance in = random_instance(71);
  TemporalTensorBuilder b(in.tensor.dims());
  for (const Cell& c : in.tensor.cells())
    for (const TimeValue& tv : c.series)
      b.add(c.index, tv.time, reference_prediction(in.params, in.scheme, in.bases, c.index, tv.time));
  in.tensor = std::move(b).build();
  const SandwichCovariance s = sandwich_covariance(in.params, in.tensor, in.scheme, in.bases, in.corr, 0.5);
  EXPECT_LT(s.cov_gamma.norm(), 1e-20);
  EXPECT_LT(s.sigma2_train, 1e-24);
}

TEST(Sandwich, SymmetricWithNonNegativeDiagonal) {
  const Instance in = random_instance(72);
  const SandwichCovariance s = sandwich_covariance(in.params, in.tensor, in.scheme, in.bases, in.corr, in.lambda);
  EXPECT_LT((s.cov_gamma - s.cov_gamma.transpose()).norm(), 1e-14 * s.cov_gamma.norm());
  EXPECT_GE(s.cov_gamma.diagonal().minCoeff(), 0.0);
}

TEST(Sandwich, SingularSystemSuggestsLambda) {
  Instance in = random_instance(73);
  in.params.factors[0].setZero();  // trend part of W vanishes
  try {
    sandwich_covariance(in.params, in.tensor, in.scheme, in.bases, in.corr, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ridge_degenerate);
    EXPECT_NE(std::string(e.what()).find("lambda"), std::string::npos);
  }
}

TEST(Interval, SymmetricAndWidthFormula) {
  const Instance in = random_instance(74);
  const SandwichCovariance s = sandwich_covariance(in.params, in.tensor, in.scheme, in.bases, in.corr, in.lambda);
  const IndexTuple idx{1, 2, 3};
  double prev_width = 0.0;
  for (double level : {0.5, 0.8, 0.95, 0.99}) {
    const IntervalEstimate e = prediction_interval(in.params, in.scheme, in.bases, s, idx, 0.3, level);
    EXPECT_LE(e.lower, e.yhat);
    EXPECT_LE(e.yhat, e.upper);
    EXPECT_NEAR(e.upper - e.yhat, e.yhat - e.lower, 1e-12);
    EXPECT_NEAR(e.upper - e.lower, 2 * interval_multiplier(level) * e.se_prediction, 1e-12);
    const Eigen::VectorXd w = design_row(in.params, in.scheme, in.bases, idx, 0.3);
    EXPECT_NEAR(e.se_prediction * e.se_prediction, w.dot(s.cov_gamma * w) + s.sigma2_train, 1e-10);
    EXPECT_GT(e.upper - e.lower, prev_width);
    prev_width = e.upper - e.lower;
    EXPECT_FALSE(e.cold);
  }
}

TEST(Interval, ColdCellVariance) {
  Instance in = random_instance(75);
  SandwichCovariance s = sandwich_covariance(in.params, in.tensor, in.scheme, in.bases, in.corr, in.lambda);
  in.params.factors[0].row(2).setZero();
  const IndexTuple idx{2, 0, 0};
  const IntervalEstimate sub = prediction_interval(in.params, in.scheme, in.bases, s, idx, 0.6, 0.95);
  const IntervalEstimate mod =
      prediction_interval(in.params, in.scheme, in.bases, s, idx, 0.6, 0.95, ColdVariance::model);
  EXPECT_TRUE(sub.cold);
  const Eigen::VectorXd w = design_row(in.params, in.scheme, in.bases, idx, 0.6);
  const double v = w.dot(s.cov_gamma * w);
  EXPECT_NEAR(sub.se_prediction * sub.se_prediction, v + s.sigma2_subgroup, 1e-10);
  EXPECT_NEAR(mod.se_prediction * mod.se_prediction, v + s.sigma2_train, 1e-10);
  EXPECT_EQ(parse_cold_variance("model"), ColdVariance::model);
  EXPECT_THROW(parse_cold_variance("x"), Error);
}
