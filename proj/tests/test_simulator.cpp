#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "dtrs/error.hpp"
#include "dtrs/simulator.hpp"

using namespace dtrs;

namespace {

SimConfig small_config() {
  SimConfig c;
  c.n = {20, 5, 20};
  c.m = {4, 2, 5, 4};
  c.seed = 17;
  return c;
}

}  // namespace

TEST(Simulator, TrendFunctions) {
  using std::numbers::pi;
  EXPECT_DOUBLE_EQ(trend_h(1, 0.5), std::sin(0.15 * pi));
  EXPECT_DOUBLE_EQ(trend_h(2, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(trend_h(3, 0.0), 2.0);
  EXPECT_DOUBLE_EQ(trend_g(1, 0.25), -0.5);
  EXPECT_DOUBLE_EQ(trend_g(2, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(trend_g(4, 0.0), 5.0);
  EXPECT_NEAR(true_subgroup_factor(1, 3), 0.2, 1e-15);
  EXPECT_DOUBLE_EQ(true_subgroup_factor(2, 2), 0.0);
  EXPECT_NEAR(true_subgroup_factor(3, 10), 1.6, 1e-15);
  EXPECT_THROW(trend_h(4, 0.1), Error);
}

TEST(Simulator, CountsAndSplit) {
  const SimConfig c = small_config();
  const SimData d = simulate(c);
  EXPECT_EQ(d.train.num_observations() + d.test.num_observations(), c.observed_count());
  EXPECT_EQ(d.truth.times.size(), c.total_times());
  const double t1_end = d.truth.times[c.t1 - 1];
  for (double t : d.train.observation_times()) EXPECT_LE(t, t1_end);
  for (double t : d.test.observation_times()) EXPECT_GT(t, t1_end);
  EXPECT_EQ(d.truth.cold_items.size(), 6u);  // ceil(0.3 * 20)
  for (const Cell& cell : d.train.cells())
    EXPECT_LT(cell.index[2], d.truth.cold_items.front());
  std::set<Index> cold_in_test;
  for (const Cell& cell : d.test.cells())
    if (cell.index[2] >= d.truth.cold_items.front()) cold_in_test.insert(cell.index[2]);
  EXPECT_FALSE(cold_in_test.empty());
}

TEST(Simulator, Deterministic) {
  const SimData a = simulate(small_config());
  const SimData b = simulate(small_config());
  ASSERT_EQ(a.train.num_cells(), b.train.num_cells());
  for (std::size_t c = 0; c < a.train.num_cells(); ++c)
    for (std::size_t o = 0; o < a.train.cells()[c].series.size(); ++o)
      EXPECT_EQ(a.train.cells()[c].series[o].value, b.train.cells()[c].series[o].value);
  SimConfig other = small_config();
  other.seed = 18;
  EXPECT_NE(simulate(other).truth.times, a.truth.times);
}

TEST(Simulator, TimeGroupAssignment) {
  SimConfig c = small_config();
  const SimData rr = simulate(c);
  for (std::size_t tau = 0; tau < rr.truth.times.size(); ++tau) {
    EXPECT_EQ(rr.truth.time_labels[tau], static_cast<int>(tau % 4));
    EXPECT_EQ(rr.scheme.time_groups.group_of(rr.truth.times[tau]), rr.truth.time_labels[tau]);
  }
  c.time_assignment = TimeAssignment::contiguous;
  const SimData ct = simulate(c);
  for (std::size_t tau = 0; tau < ct.truth.times.size(); ++tau)
    EXPECT_EQ(ct.truth.time_labels[tau], static_cast<int>(tau * 4 / 20));
}

TEST(Simulator, NoiseHasUnitVariance) {
  SimConfig c = small_config();
  c.n = {40, 5, 40};
  c.pi_m = 0.5;
  for (auto structure : {CorrelationStructure::independence, CorrelationStructure::ar1}) {
    c.error = structure;
    const SimData d = simulate(c);
    double ss = 0.0, lag = 0.0;
    std::size_t n = 0, nl = 0;
    for (const Cell& cell : d.train.cells()) {
      double prev = 0.0;
      double prev_t = -1.0;
      for (const TimeValue& tv : cell.series) {
        const double e = tv.value - true_mean(d.truth, d.scheme, cell.index, tv.time);
        ss += e * e;
        ++n;
        // Adjacent in the full time grid.
        if (prev_t >= 0.0) {
          const auto it = std::lower_bound(d.truth.times.begin(), d.truth.times.end(), prev_t);
          if (*(it + 1) == tv.time) {
            lag += e * prev;
            ++nl;
          }
        }
        prev = e;
        prev_t = tv.time;
      }
    }
    EXPECT_NEAR(ss / n, 1.0, 0.05);
    EXPECT_NEAR(lag / nl, structure == CorrelationStructure::ar1 ? 0.85 : 0.0, 0.05);
  }
}

TEST(Simulator, RejectsBadConfig) {
  SimConfig c = small_config();
  c.pi_m = 1.0;
  EXPECT_THROW(simulate(c), Error);
  c = small_config();
  c.m = {4, 2, 5, 5};
  EXPECT_THROW(simulate(c), Error);
  c = small_config();
  c.error = CorrelationStructure::exchangeable;
  EXPECT_THROW(simulate(c), Error);
}
