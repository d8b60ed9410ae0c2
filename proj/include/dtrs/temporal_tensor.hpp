#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <vector>

namespace dtrs {

// Mode indices are 0-based inside the library; file formats are 1-based.
using Index = std::uint32_t;
using IndexTuple = std::vector<Index>;

struct TimeValue {
  double time;
  double value;
};

struct Observation {
  IndexTuple indices;
  double time;
  double value;
};

// One observed index tuple with its time-sorted series.
struct Cell {
  IndexTuple index;
  std::vector<TimeValue> series;
};

// Sparse d-mode tensor-valued function of time on [0, 1]. Cells are kept in
// lexicographic index order; no dense storage is ever formed.
class TemporalTensor {
 public:
  TemporalTensor() = default;

  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  std::size_t order() const noexcept { return dims_.size(); }
  std::span<const Cell> cells() const noexcept { return cells_; }
  std::size_t num_cells() const noexcept { return cells_.size(); }
  std::size_t num_observations() const noexcept { return num_obs_; }

  const Cell* find(const IndexTuple& index) const;

  // All observed cells whose `mode`-th coordinate equals `subject`.
  std::vector<IndexTuple> cell_index_sets(std::size_t mode, Index subject) const;

  std::vector<double> observation_times() const;
  std::vector<double> distinct_times() const;

  // Keeps observations for which keep(cell, tv) holds; drops emptied cells.
  TemporalTensor filter(const std::function<bool(const IndexTuple&, const TimeValue&)>& keep) const;

  // Same cells with a new (at least as large) shape.
  TemporalTensor with_dims(std::vector<std::size_t> dims) const;

 private:
  friend class TemporalTensorBuilder;
  std::vector<std::size_t> dims_;
  std::vector<Cell> cells_;
  std::size_t num_obs_ = 0;
};

class TemporalTensorBuilder {
 public:
  explicit TemporalTensorBuilder(std::vector<std::size_t> dims);

  // Bounds error on out-of-range indices or time; conflict error on a repeated
  // (cell, time) pair.
  void add(const Observation& obs);
  void add(const IndexTuple& index, double time, double value);

  std::size_t size() const noexcept { return num_obs_; }

  TemporalTensor build() &&;

 private:
  std::vector<std::size_t> dims_;
  std::map<IndexTuple, std::vector<TimeValue>> cells_;
  std::size_t num_obs_ = 0;
};

// Piecewise-constant map [0, 1] -> {0, ..., count-1}.
class TimeGroups {
 public:
  enum class Kind { intervals, periodic };

  // One group covering all of [0, 1].
  TimeGroups();

  // Interval i is [breakpoints[i-1], breakpoints[i]) and carries labels[i];
  // labels may repeat. labels.size() == breakpoints.size() + 1.
  static TimeGroups intervals(std::vector<double> breakpoints, std::vector<int> labels);

  // Each period of length `period` starting at `origin` is split into `count`
  // equal phases (calendar-month style).
  static TimeGroups periodic(double period, double origin, int count);

  // Groups a discrete set of time points: cut halfway between consecutive
  // sorted points and attach each point's label.
  static TimeGroups from_points(std::span<const double> times, std::span<const int> labels);

  Kind kind() const noexcept { return kind_; }
  int count() const noexcept { return count_; }
  int group_of(double t) const;

  const std::vector<double>& breakpoints() const noexcept { return breakpoints_; }
  const std::vector<int>& labels() const noexcept { return labels_; }
  double period() const noexcept { return period_; }
  double origin() const noexcept { return origin_; }

 private:
  Kind kind_ = Kind::intervals;
  int count_ = 1;
  std::vector<double> breakpoints_;
  std::vector<int> labels_{0};
  double period_ = 1.0;
  double origin_ = 0.0;
};

inline constexpr int kUnassignedGroup = -1;

// Subject -> subgroup maps for every mode plus the time grouping.
struct SubgroupScheme {
  // mode_groups[k][i] in {0, ..., group_counts[k]-1}, or kUnassignedGroup for
  // subjects that were never seen and have no declared group.
  std::vector<std::vector<int>> mode_groups;
  std::vector<int> group_counts;
  TimeGroups time_groups;

  std::size_t order() const noexcept { return mode_groups.size(); }

  // Every subject in a single group per mode.
  static SubgroupScheme trivial(const std::vector<std::size_t>& dims);

  // Shape and label-range checks against tensor dims.
  void validate(const std::vector<std::size_t>& dims) const;
};

}  // namespace dtrs
