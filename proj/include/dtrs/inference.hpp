#pragma once

#include <span>
#include <string_view>

#include <Eigen/Dense>

#include "dtrs/model.hpp"

namespace dtrs {

// gamma = (alpha_1, ..., alpha_r, beta_1, ..., beta_m) stacked row by row.
struct SandwichCovariance {
  Eigen::MatrixXd cov_gamma;
  Eigen::MatrixXd psi_hat;
  Eigen::MatrixXd phi_hat;
  double sigma2_train = 0.0;  // training mean squared error
  // Training mean squared error of the subgroup-only predictor g(t) prod q.
  double sigma2_subgroup = 0.0;
};

// Noise variance used for cells whose prediction degenerates to the subgroup
// term (some subject has an all-zero factor row). `subgroup` uses that
// predictor's own training error; `model` uses sigma2_train for every cell.
enum class ColdVariance { subgroup, model };

std::string_view to_string(ColdVariance v) noexcept;
ColdVariance parse_cold_variance(std::string_view name);

struct IntervalEstimate {
  double yhat;
  double lower;
  double upper;
  double se_prediction;
  double level;
  bool clamped;  // w^T Cov w came out negative and was set to 0
  bool cold;     // subgroup-only prediction
};

// Standard normal quantile, accurate to about 1e-9 for p in (0, 1).
double normal_quantile(double p);

// z such that a central interval +-z has the given coverage (0.95 -> 1.959964).
double interval_multiplier(double level);

std::size_t gamma_size(const ModelParams& params);

// Row of the linear predictor in gamma at (cell, t), factors held fixed.
Eigen::VectorXd design_row(const ModelParams& params, const SubgroupScheme& scheme,
                           const ModelBases& bases, std::span<const Index> indices, double t);

SandwichCovariance sandwich_covariance(const ModelParams& params, const TemporalTensor& tensor,
                                       const SubgroupScheme& scheme, const ModelBases& bases,
                                       const CorrelationSpec& corr, double lambda);

IntervalEstimate prediction_interval(const ModelParams& params, const SubgroupScheme& scheme,
                                     const ModelBases& bases, const SandwichCovariance& sandwich,
                                     std::span<const Index> indices, double t, double level,
                                     ColdVariance cold_variance = ColdVariance::subgroup);

}  // namespace dtrs
