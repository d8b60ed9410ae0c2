#include "dtrs/temporal_tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dtrs/error.hpp"

namespace dtrs {
namespace {

std::string tuple_string(const IndexTuple& index) {
  std::string s = "(";
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (k) s += ",";
    s += std::to_string(index[k] + 1);
  }
  return s + ")";
}

}  // namespace

const Cell* TemporalTensor::find(const IndexTuple& index) const {
  auto it = std::lower_bound(cells_.begin(), cells_.end(), index,
                             [](const Cell& c, const IndexTuple& key) { return c.index < key; });
  if (it == cells_.end() || it->index != index) return nullptr;
  return &*it;
}

std::vector<IndexTuple> TemporalTensor::cell_index_sets(std::size_t mode, Index subject) const {
  if (mode >= order()) fail(ErrorKind::bounds, "mode " + std::to_string(mode) + " out of range");
  if (subject >= dims_[mode])
    fail(ErrorKind::bounds, "subject " + std::to_string(subject) + " out of range for mode " +
                                std::to_string(mode));
  std::vector<IndexTuple> out;
  for (const Cell& c : cells_)
    if (c.index[mode] == subject) out.push_back(c.index);
  return out;
}

std::vector<double> TemporalTensor::observation_times() const {
  std::vector<double> times;
  times.reserve(num_obs_);
  for (const Cell& c : cells_)
    for (const TimeValue& tv : c.series) times.push_back(tv.time);
  return times;
}

std::vector<double> TemporalTensor::distinct_times() const {
  std::vector<double> times = observation_times();
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  return times;
}

TemporalTensor TemporalTensor::filter(
    const std::function<bool(const IndexTuple&, const TimeValue&)>& keep) const {
  TemporalTensor out;
  out.dims_ = dims_;
  for (const Cell& c : cells_) {
    Cell kept{c.index, {}};
    for (const TimeValue& tv : c.series)
      if (keep(c.index, tv)) kept.series.push_back(tv);
    if (!kept.series.empty()) {
      out.num_obs_ += kept.series.size();
      out.cells_.push_back(std::move(kept));
    }
  }
  return out;
}

TemporalTensor TemporalTensor::with_dims(std::vector<std::size_t> dims) const {
  if (dims.size() != dims_.size()) fail(ErrorKind::config, "tensor order mismatch");
  for (std::size_t k = 0; k < dims.size(); ++k)
    if (dims[k] < dims_[k]) fail(ErrorKind::bounds, "declared dims smaller than observed");
  TemporalTensor out = *this;
  out.dims_ = std::move(dims);
  return out;
}

TemporalTensorBuilder::TemporalTensorBuilder(std::vector<std::size_t> dims)
    : dims_(std::move(dims)) {
  if (dims_.empty()) fail(ErrorKind::config, "tensor needs at least one mode");
}

void TemporalTensorBuilder::add(const Observation& obs) { add(obs.indices, obs.time, obs.value); }

void TemporalTensorBuilder::add(const IndexTuple& index, double time, double value) {
  if (index.size() != dims_.size())
    fail(ErrorKind::bounds, "index tuple has " + std::to_string(index.size()) +
                                " modes, expected " + std::to_string(dims_.size()));
  for (std::size_t k = 0; k < index.size(); ++k)
    if (index[k] >= dims_[k])
      fail(ErrorKind::bounds, "index " + tuple_string(index) + " out of range in mode " +
                                  std::to_string(k + 1));
  if (!(time >= 0.0 && time <= 1.0))
    fail(ErrorKind::bounds, "time " + std::to_string(time) + " outside [0, 1]");
  if (!std::isfinite(value)) fail(ErrorKind::parse, "non-finite value");
  auto& series = cells_[index];
  for (const TimeValue& tv : series)
    if (tv.time == time)
      fail(ErrorKind::conflict, "duplicate observation for cell " + tuple_string(index) +
                                    " at time " + std::to_string(time));
  series.push_back({time, value});
  ++num_obs_;
}

TemporalTensor TemporalTensorBuilder::build() && {
  TemporalTensor t;
  t.dims_ = std::move(dims_);
  t.num_obs_ = num_obs_;
  t.cells_.reserve(cells_.size());
  for (auto& [index, series] : cells_) {
    std::sort(series.begin(), series.end(),
              [](const TimeValue& a, const TimeValue& b) { return a.time < b.time; });
    t.cells_.push_back({index, std::move(series)});
  }
  cells_.clear();
  return t;
}

TimeGroups::TimeGroups() = default;

TimeGroups TimeGroups::intervals(std::vector<double> breakpoints, std::vector<int> labels) {
  if (labels.size() != breakpoints.size() + 1)
    fail(ErrorKind::config, "time intervals need one more label than breakpoints");
  for (std::size_t i = 1; i < breakpoints.size(); ++i)
    if (!(breakpoints[i] > breakpoints[i - 1]))
      fail(ErrorKind::config, "time breakpoints must be strictly increasing");
  TimeGroups g;
  g.kind_ = Kind::intervals;
  int max_label = -1;
  for (int l : labels) {
    if (l < 0) fail(ErrorKind::config, "time group labels must be >= 1");
    max_label = std::max(max_label, l);
  }
  g.count_ = max_label + 1;
  g.breakpoints_ = std::move(breakpoints);
  g.labels_ = std::move(labels);
  return g;
}

TimeGroups TimeGroups::periodic(double period, double origin, int count) {
  if (!(period > 0.0) || count < 1)
    fail(ErrorKind::config, "periodic time groups need period > 0 and count >= 1");
  TimeGroups g;
  g.kind_ = Kind::periodic;
  g.count_ = count;
  g.period_ = period;
  g.origin_ = origin;
  g.labels_.clear();
  return g;
}

TimeGroups TimeGroups::from_points(std::span<const double> times, std::span<const int> labels) {
  if (times.size() != labels.size() || times.empty())
    fail(ErrorKind::config, "time points and labels must be nonempty and aligned");
  std::vector<std::size_t> order(times.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return times[a] < times[b]; });
  std::vector<double> cuts;
  std::vector<int> labs{labels[order[0]]};
  for (std::size_t i = 1; i < order.size(); ++i) {
    const double a = times[order[i - 1]];
    const double b = times[order[i]];
    if (a == b) {
      if (labels[order[i]] != labels[order[i - 1]])
        fail(ErrorKind::conflict, "time point " + std::to_string(a) + " has two group labels");
      continue;
    }
    cuts.push_back(0.5 * (a + b));
    labs.push_back(labels[order[i]]);
  }
  return intervals(std::move(cuts), std::move(labs));
}

int TimeGroups::group_of(double t) const {
  if (kind_ == Kind::periodic) {
    // Phase in units of one group; times that land on a boundary up to
    // rounding (t rescaled from whole calendar units) go to the later group.
    double pos = (t - origin_) / period_ * count_;
    pos = std::floor(pos + 1e-9 * std::max(1.0, std::abs(pos)));
    const double c = static_cast<double>(count_);
    return static_cast<int>(pos - c * std::floor(pos / c));
  }
  const auto pos = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), t) -
                   breakpoints_.begin();
  return labels_[static_cast<std::size_t>(pos)];
}

SubgroupScheme SubgroupScheme::trivial(const std::vector<std::size_t>& dims) {
  SubgroupScheme s;
  for (std::size_t n : dims) {
    s.mode_groups.emplace_back(n, 0);
    s.group_counts.push_back(1);
  }
  return s;
}

void SubgroupScheme::validate(const std::vector<std::size_t>& dims) const {
  if (mode_groups.size() != dims.size() || group_counts.size() != dims.size())
    fail(ErrorKind::config, "subgroup scheme order does not match the tensor");
  for (std::size_t k = 0; k < dims.size(); ++k) {
    if (mode_groups[k].size() != dims[k])
      fail(ErrorKind::config, "subgroup map for mode " + std::to_string(k + 1) + " has " +
                                  std::to_string(mode_groups[k].size()) + " subjects, expected " +
                                  std::to_string(dims[k]));
    if (group_counts[k] < 1) fail(ErrorKind::config, "each mode needs at least one subgroup");
    for (int g : mode_groups[k])
      if (g != kUnassignedGroup && (g < 0 || g >= group_counts[k]))
        fail(ErrorKind::config, "subgroup label out of range in mode " + std::to_string(k + 1));
  }
}

}  // namespace dtrs
