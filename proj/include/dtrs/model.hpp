#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dtrs/spline_basis.hpp"
#include "dtrs/temporal_tensor.hpp"
#include "dtrs/working_correlation.hpp"

namespace dtrs {

// B_j(t) for the trend coefficients h_j and A_e(t) for the time-subgroup
// coefficients g_e. Both default to the same basis.
struct ModelBases {
  SplineBasis trend;
  SplineBasis group;
};

struct BasisConfig {
  int degree = 2;
  // Interior knot count; floor(N^(1/(2 kappa + 3))) when unset.
  std::optional<std::size_t> knots;
  KnotPlacement placement = KnotPlacement::quantile;
  BasisFamily family = BasisFamily::truncated_power;
  // Separate knot count for A_e; shares the trend basis when unset.
  std::optional<std::size_t> group_knots;
};

ModelBases make_bases(const TemporalTensor& tensor, const BasisConfig& config);

struct HyperParams {
  std::size_t rank = 3;
  double lambda = 0.0;
  double epsilon = 1e-4;
  std::size_t max_iter = 500;
  std::uint64_t seed = 1;

  void validate() const;
};

// theta = {P, q, gamma = (alpha, beta)}. Only the m_k subgroup values of each
// mode are stored; a subject's subgroup factor is looked up through the scheme.
struct ModelParams {
  std::vector<Eigen::MatrixXd> factors;   // P^k, n_k x r
  std::vector<Eigen::VectorXd> subgroup;  // q^(k), length m_k
  Eigen::MatrixXd alpha;                  // r x M (row j = alpha_j)
  Eigen::MatrixXd beta;                   // m_{d+1} x M (row e = beta_e)

  std::size_t order() const noexcept { return factors.size(); }
  std::size_t rank() const noexcept {
    return static_cast<std::size_t>(alpha.rows());
  }

  // ||P||_F^2 + ||q||_2^2 + ||gamma||_2^2
  double penalty() const;
  bool all_finite() const;

  void validate(const std::vector<std::size_t>& dims, const SubgroupScheme& scheme,
                const ModelBases& bases) const;

  static ModelParams zeros(const std::vector<std::size_t>& dims, std::size_t rank,
                           const SubgroupScheme& scheme, const ModelBases& bases);
};

// sum_j h_j(t) prod_k p^k_{i_k j} + g_{e(t)}(t) prod_k q^k_{(e_k)}.
// Throws cold-start-unresolvable when a subject has no subgroup.
double predict_cell(const ModelParams& params, const SubgroupScheme& scheme,
                    const ModelBases& bases, std::span<const Index> indices, double t);

// Flattened, read-only view of a tensor for the estimation loops: cells in
// lexicographic order, observations contiguous per cell, basis rows cached.
class FitData {
 public:
  FitData(const TemporalTensor& tensor, const SubgroupScheme& scheme, const ModelBases& bases,
          const CorrelationSpec& corr);

  std::size_t order() const noexcept { return dims_.size(); }
  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  std::size_t num_cells() const noexcept { return cell_begin_.size() - 1; }
  std::size_t num_obs() const noexcept { return value_.size(); }
  std::size_t trend_size() const noexcept { return trend_size_; }
  std::size_t group_size() const noexcept { return group_size_; }
  std::size_t num_time_groups() const noexcept { return num_time_groups_; }

  std::size_t cell_begin(std::size_t c) const noexcept { return cell_begin_[c]; }
  std::size_t cell_size(std::size_t c) const noexcept {
    return cell_begin_[c + 1] - cell_begin_[c];
  }
  Index cell_subject(std::size_t c, std::size_t mode) const noexcept {
    return cell_index_[c * order() + mode];
  }
  int cell_group(std::size_t c, std::size_t mode) const noexcept {
    return cell_group_[c * order() + mode];
  }

  std::span<const double> values() const noexcept { return value_; }
  std::span<const double> times() const noexcept { return time_; }
  // Rank of each observation's time among the distinct times of the tensor,
  // starting at the first observation of cell c.
  const double* cell_grid(std::size_t c) const noexcept { return grid_.data() + cell_begin_[c]; }
  int time_group(std::size_t obs) const noexcept { return time_group_[obs]; }

  // Row-major num_obs x M basis rows, and the same values column-major.
  const double* trend_row(std::size_t obs) const noexcept {
    return trend_rows_.data() + obs * trend_size_;
  }
  const double* group_row(std::size_t obs) const noexcept {
    return group_rows_.data() + obs * group_size_;
  }
  std::span<const double> trend_column(std::size_t m) const noexcept {
    return {trend_cols_.data() + m * num_obs(), num_obs()};
  }

  // Cells of subject i in `mode` (the set Omega^k_i), as cell positions.
  std::span<const std::size_t> slice(std::size_t mode, std::size_t subject) const noexcept {
    const auto& ptr = slice_ptr_[mode];
    return {slice_cells_[mode].data() + ptr[subject], ptr[subject + 1] - ptr[subject]};
  }

  std::size_t subgroup_obs(std::size_t mode, std::size_t group) const noexcept {
    return subgroup_obs_[mode][group];
  }
  std::size_t time_group_obs(std::size_t e) const noexcept { return time_group_obs_[e]; }
  const std::vector<int>& group_counts() const noexcept { return group_counts_; }

  // Basis coefficients of the constant function 1.
  const Eigen::VectorXd& trend_unit() const noexcept { return trend_unit_; }
  const Eigen::VectorXd& group_unit() const noexcept { return group_unit_; }

  const Whitener& whitener() const noexcept { return whitener_; }
  std::size_t max_cell_size() const noexcept { return max_cell_size_; }

 private:
  std::vector<std::size_t> dims_;
  std::vector<int> group_counts_;
  std::size_t trend_size_;
  std::size_t group_size_;
  std::size_t num_time_groups_;
  std::vector<Index> cell_index_;
  std::vector<int> cell_group_;
  std::vector<std::size_t> cell_begin_;
  std::vector<double> time_;
  std::vector<double> grid_;
  std::vector<double> value_;
  std::vector<int> time_group_;
  std::vector<double> trend_rows_;
  std::vector<double> trend_cols_;
  std::vector<double> group_rows_;
  std::vector<std::vector<std::size_t>> slice_ptr_;
  std::vector<std::vector<std::size_t>> slice_cells_;
  std::vector<std::vector<std::size_t>> subgroup_obs_;
  std::vector<std::size_t> time_group_obs_;
  Eigen::VectorXd trend_unit_;
  Eigen::VectorXd group_unit_;
  Whitener whitener_;
  std::size_t max_cell_size_ = 0;
};

// Per-observation pieces of a prediction. trend is r blocks of num_obs values
// (h_j(t_o)); products holds prod_k p^k_{i_k j} broadcast to observations in
// the same layout; group and subgroup_products are g_{e(t)}(t_o) and
// prod_k q^k_{(e_k)}.
struct Contributions {
  std::vector<double> trend;
  std::vector<double> products;
  std::vector<double> group;
  std::vector<double> subgroup_products;
};

void compute_trend(const FitData& data, const Eigen::MatrixXd& alpha, std::vector<double>& out);
void compute_group(const FitData& data, const Eigen::MatrixXd& beta, std::vector<double>& out);
void compute_products(const FitData& data, const std::vector<Eigen::MatrixXd>& factors,
                      std::vector<double>& out);
void compute_subgroup_products(const FitData& data, const std::vector<Eigen::VectorXd>& subgroup,
                               std::vector<double>& out);
Contributions compute_contributions(const FitData& data, const ModelParams& params);

// y - yhat per observation.
void compute_residuals(const FitData& data, const Contributions& parts, std::size_t rank,
                       std::vector<double>& out);

// sum over cells of r^T Sigma^{-1} r, using `scratch` for the residuals.
double weighted_rss(const FitData& data, const Contributions& parts, std::size_t rank,
                    std::vector<double>& scratch);

// Weighted penalized least-squares criterion.
double objective(const ModelParams& params, const TemporalTensor& tensor,
                 const SubgroupScheme& scheme, const ModelBases& bases,
                 const CorrelationSpec& corr, double lambda);
double objective(const ModelParams& params, const FitData& data, double lambda);

// Raw residual vector of every cell, in cell order.
std::vector<std::vector<double>> cell_residuals(const ModelParams& params, const FitData& data);
std::vector<std::vector<double>> cell_grids(const FitData& data);

}  // namespace dtrs
