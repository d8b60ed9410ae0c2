#include <gtest/gtest.h>

#include "dtrs/error.hpp"
#include "dtrs/temporal_tensor.hpp"

using namespace dtrs;

namespace {

TemporalTensor small() {
  TemporalTensorBuilder b({3, 2});
  b.add({2, 1}, 0.5, 1.0);
  b.add({0, 0}, 0.9, 2.0);
  b.add({0, 0}, 0.1, 3.0);
  b.add({2, 1}, 0.2, 4.0);
  b.add({1, 0}, 0.1, 5.0);
  return std::move(b).build();
}

}  // namespace

TEST(TemporalTensor, CellsSortedAndSeriesSorted) {
  const TemporalTensor t = small();
  ASSERT_EQ(t.num_cells(), 3u);
  EXPECT_EQ(t.num_observations(), 5u);
  EXPECT_EQ(t.cells()[0].index, (IndexTuple{0, 0}));
  EXPECT_EQ(t.cells()[2].index, (IndexTuple{2, 1}));
  EXPECT_EQ(t.cells()[0].series[0].time, 0.1);
  EXPECT_EQ(t.cells()[0].series[0].value, 3.0);
  EXPECT_EQ(t.distinct_times(), (std::vector<double>{0.1, 0.2, 0.5, 0.9}));
  ASSERT_NE(t.find({1, 0}), nullptr);
  EXPECT_EQ(t.find({1, 1}), nullptr);
}

TEST(TemporalTensor, BuilderRejects) {
  TemporalTensorBuilder b({2, 2});
  EXPECT_THROW(b.add({2, 0}, 0.5, 1.0), Error);
  EXPECT_THROW(b.add({0, 0}, 1.5, 1.0), Error);
  EXPECT_THROW(b.add({0}, 0.5, 1.0), Error);
  b.add({0, 0}, 0.5, 1.0);
  try {
    b.add({0, 0}, 0.5, 2.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::conflict);
  }
}

TEST(TemporalTensor, SlicesAndFilter) {
  const TemporalTensor t = small();
  const auto s = t.cell_index_sets(0, 2);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0], (IndexTuple{2, 1}));
  const TemporalTensor early = t.filter([](const IndexTuple&, const TimeValue& tv) { return tv.time < 0.3; });
  EXPECT_EQ(early.num_observations(), 3u);
  EXPECT_EQ(early.num_cells(), 3u);
  const TemporalTensor none = t.filter([](const IndexTuple&, const TimeValue&) { return false; });
  EXPECT_EQ(none.num_cells(), 0u);
  EXPECT_EQ(none.dims(), t.dims());
  EXPECT_EQ(t.with_dims({4, 2}).dims(), (std::vector<std::size_t>{4, 2}));
  EXPECT_THROW(t.with_dims({2, 2}), Error);
}

TEST(TimeGroups, Intervals) {
  const TimeGroups g = TimeGroups::intervals({0.25, 0.5, 0.75}, {0, 1, 0, 1});
  EXPECT_EQ(g.count(), 2);
  EXPECT_EQ(g.group_of(0.0), 0);
  EXPECT_EQ(g.group_of(0.25), 1);
  EXPECT_EQ(g.group_of(0.6), 0);
  EXPECT_EQ(g.group_of(1.0), 1);
  EXPECT_THROW(TimeGroups::intervals({0.5}, {0}), Error);
  EXPECT_THROW(TimeGroups::intervals({0.6, 0.4}, {0, 1, 0}), Error);
}

TEST(TimeGroups, PeriodicAndPoints) {
  const TimeGroups m = TimeGroups::periodic(0.5, 0.0, 4);
  EXPECT_EQ(m.group_of(0.0), 0);
  EXPECT_EQ(m.group_of(0.13), 1);
  EXPECT_EQ(m.group_of(0.51), 0);
  EXPECT_EQ(m.group_of(0.99), 3);
  const std::vector<double> times{0.1, 0.3, 0.7};
  const std::vector<int> labels{2, 0, 1};
  const TimeGroups p = TimeGroups::from_points(times, labels);
  for (std::size_t i = 0; i < times.size(); ++i) EXPECT_EQ(p.group_of(times[i]), labels[i]);
  EXPECT_EQ(p.count(), 3);
}

TEST(SubgroupScheme, Validate) {
  SubgroupScheme s = SubgroupScheme::trivial({3, 2});
  EXPECT_NO_THROW(s.validate({3, 2}));
  EXPECT_THROW(s.validate({4, 2}), Error);
  s.mode_groups[0][1] = 5;
  EXPECT_THROW(s.validate({3, 2}), Error);
}
