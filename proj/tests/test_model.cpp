#include <gtest/gtest.h>

#include "dtrs/error.hpp"
#include "dtrs/model.hpp"
#include "support.hpp"

using namespace dtrs;
using namespace dtrs::oracle;

TEST(Model, PredictionMatchesReference) {
  const Instance in = random_instance(41);
  for (const Cell& c : in.tensor.cells())
    for (const TimeValue& tv : c.series)
      EXPECT_NEAR(predict_cell(in.params, in.scheme, in.bases, c.index, tv.time),
                  reference_prediction(in.params, in.scheme, in.bases, c.index, tv.time), 1e-12);
}

TEST(Model, ZeroFactorRowLeavesSubgroupTerm) {
  Instance in = random_instance(42);
  in.params.factors[2].row(1).setZero();
  const IndexTuple idx{0, 0, 1};
  const double t = 0.4;
  double sub = in.params.beta.row(in.scheme.time_groups.group_of(t)).dot(in.bases.group.evaluate(t));
  for (std::size_t k = 0; k < 3; ++k) sub *= in.params.subgroup[k](in.scheme.mode_groups[k][idx[k]]);
  EXPECT_EQ(predict_cell(in.params, in.scheme, in.bases, idx, t), sub);
}

TEST(Model, UnassignedSubjectIsUnresolvable) {
  Instance in = random_instance(43);
  in.scheme.mode_groups[0][0] = kUnassignedGroup;
  try {
    predict_cell(in.params, in.scheme, in.bases, IndexTuple{0, 0, 0}, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::cold_start_unresolvable);
  }
  EXPECT_THROW(predict_cell(in.params, in.scheme, in.bases, IndexTuple{9, 0, 0}, 0.5), Error);
}

TEST(Model, PenaltyAndValidation) {
  const Instance in = random_instance(44);
  EXPECT_NEAR(in.params.penalty(), penalty_sum(in.params), 1e-12);
  EXPECT_NO_THROW(in.params.validate(in.tensor.dims(), in.scheme, in.bases));
  ModelParams bad = in.params;
  bad.alpha.conservativeResize(Eigen::NoChange, bad.alpha.cols() + 1);
  EXPECT_THROW(bad.validate(in.tensor.dims(), in.scheme, in.bases), Error);
  HyperParams h;
  h.lambda = -1;
  EXPECT_THROW(h.validate(), Error);
}

TEST(Model, FitDataSlicesCoverCells) {
  const Instance in = random_instance(45);
  const FitData data(in.tensor, in.scheme, in.bases, in.corr);
  EXPECT_EQ(data.num_cells(), in.tensor.num_cells());
  EXPECT_EQ(data.num_obs(), in.tensor.num_observations());
  for (std::size_t k = 0; k < 3; ++k) {
    std::size_t total = 0;
    for (std::size_t i = 0; i < in.tensor.dims()[k]; ++i) {
      for (std::size_t c : data.slice(k, i)) EXPECT_EQ(data.cell_subject(c, k), i);
      total += data.slice(k, i).size();
    }
    EXPECT_EQ(total, data.num_cells());
  }
}

TEST(Model, CellResidualsMatchReference) {
  const Instance in = random_instance(46);
  const FitData data(in.tensor, in.scheme, in.bases, in.corr);
  const auto res = cell_residuals(in.params, data);
  ASSERT_EQ(res.size(), in.tensor.num_cells());
  for (std::size_t c = 0; c < res.size(); ++c) {
    const Cell& cell = in.tensor.cells()[c];
    for (std::size_t o = 0; o < cell.series.size(); ++o)
      EXPECT_NEAR(res[c][o],
                  cell.series[o].value - reference_prediction(in.params, in.scheme, in.bases, cell.index,
                                                              cell.series[o].time),
                  1e-12);
  }
}
