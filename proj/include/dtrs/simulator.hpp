#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "dtrs/temporal_tensor.hpp"
#include "dtrs/working_correlation.hpp"

namespace dtrs {

// How the T sorted time draws are split among the time subgroups.
enum class TimeAssignment { contiguous, round_robin };

std::string_view to_string(TimeAssignment a) noexcept;
TimeAssignment parse_time_assignment(std::string_view name);

// Third-order design with three trend functions and up to four time-subgroup
// functions.
struct SimConfig {
  std::vector<std::size_t> n{100, 9, 100};
  std::vector<int> m{10, 3, 10, 4};  // subgroups of modes 1..3, then time
  std::size_t r = 3;
  std::size_t t1 = 12;
  std::size_t t2 = 8;
  double pi_m = 0.8;
  double pi_cs = 0.3;
  CorrelationStructure error = CorrelationStructure::independence;
  double rho = 0.85;
  std::uint64_t seed = 1;
  TimeAssignment time_assignment = TimeAssignment::round_robin;

  void validate() const;
  std::size_t total_times() const noexcept { return t1 + t2; }
  std::size_t observed_count() const;
};

// h_1..h_3 and g_1..g_4 (1-based j, e).
double trend_h(int j, double t);
double trend_g(int e, double t);

// Subgroup factor q^k_(e) of mode k (1-based k, e).
double true_subgroup_factor(int k, int e);

struct SimTruth {
  std::vector<Eigen::MatrixXd> factors;   // p^k, n_k x r
  std::vector<Eigen::VectorXd> subgroup;  // q^(k), length m_k
  std::vector<double> times;              // all T sorted time points
  std::vector<int> time_labels;           // time subgroup of each time point
  std::vector<Index> cold_items;          // mode-3 subjects absent from training
};

struct SimData {
  TemporalTensor train;
  TemporalTensor test;
  SubgroupScheme scheme;
  SimTruth truth;
};

// Noise-free mean of a cell at time t under the truth.
double true_mean(const SimTruth& truth, const SubgroupScheme& scheme,
                 std::span<const Index> indices, double t);

// Draw order from one seeded engine: time points, factors (mode order),
// observed-entry selection, then one error series per cell over all T times.
SimData simulate(const SimConfig& config);

}  // namespace dtrs
