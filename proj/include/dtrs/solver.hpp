#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dtrs/model.hpp"

namespace dtrs {

// max_block accepts only the best block of each step (maximum block
// improvement). cyclic visits every block of a step in turn and keeps each
// exact update that does not raise the objective.
enum class MbiMode { max_block, cyclic };

struct IterationLog {
  std::size_t iteration;
  std::string step;   // "individual" or "subgroup"
  std::string block;  // accepted block label, or "none"
  double objective;
  double improvement;
};

struct SolverOptions {
  HyperParams hyper;
  MbiMode mode = MbiMode::max_block;
  std::size_t threads = 1;
  std::function<void(const IterationLog&)> log;
};

struct FitReport {
  std::size_t iterations = 0;
  // Objective at the start, then after step 2 and step 3 of every iteration.
  std::vector<double> objective_trace;
  // Block accepted in each step ("P1".."Pd", "alpha", "q1".."qd", "beta", "none").
  std::vector<std::string> accepted_blocks;
  // Largest J among the 2d + 2 candidates of each iteration.
  std::vector<double> max_improvement;
  bool converged = false;
  double final_lambda = 0.0;
  double wallclock = 0.0;
  // Parameters held fixed for lack of support (< 2 observations), e.g. "q2[3]".
  std::vector<std::string> frozen;
  // Candidates skipped because their ridge system was singular at lambda = 0.
  std::vector<std::string> skipped;
};

struct FitResult {
  ModelParams params;
  FitReport report;
};

// Exact minimizer of the weighted ridge problem for one row of P^k, other
// blocks fixed. A subject with no observations gets the zero vector.
Eigen::VectorXd update_individual_slice(const FitData& data, const ModelParams& params,
                                        std::size_t mode, std::size_t subject, double lambda);
Eigen::VectorXd update_individual_slice(const FitData& data, const ModelParams& params,
                                        const Contributions& parts, std::size_t mode,
                                        std::size_t subject, double lambda);

// All rows of P^k; rows are independent and solved on `threads` workers.
Eigen::MatrixXd update_individual_factor(const FitData& data, const ModelParams& params,
                                         const Contributions& parts, std::size_t mode,
                                         double lambda, std::size_t threads = 1);

struct SubgroupUpdate {
  Eigen::VectorXd values;
  std::vector<bool> frozen;
};

// q^(k). Subgroups with fewer than two observations keep their value.
SubgroupUpdate update_subgroup_factors(const FitData& data, const ModelParams& params,
                                       std::size_t mode, double lambda);
SubgroupUpdate update_subgroup_factors(const FitData& data, const ModelParams& params,
                                       const Contributions& parts, std::size_t mode,
                                       double lambda);

Eigen::MatrixXd update_alpha(const FitData& data, const ModelParams& params, double lambda);
Eigen::MatrixXd update_alpha(const FitData& data, const ModelParams& params,
                             const Contributions& parts, double lambda);

struct BetaUpdate {
  Eigen::MatrixXd values;
  std::vector<bool> frozen;
};

// Solved jointly over all time groups: a non-diagonal working correlation
// couples observations of different groups within a cell. Groups with fewer
// than two observations keep their row.
BetaUpdate update_beta(const FitData& data, const ModelParams& params, double lambda);
BetaUpdate update_beta(const FitData& data, const ModelParams& params,
                       const Contributions& parts, double lambda);

// J = 1 - candidate / previous; 0 when previous is 0.
double improvement(double candidate, double previous);

// P^k ~ N(0, 1/r) entrywise (zero rows for subjects without observations),
// q = 1, alpha set so every h_j is the constant 1, and beta the exact beta
// block minimizer given those (0 if that system is ridge-degenerate).
// With alpha = 0 or beta = 0 the first P^k or q^k candidates are pure
// shrinkage toward 0, which maximum block improvement may pick and can never
// leave. A constant starting g_e leaves the fit in a slow swamp between q
// and P^k.
ModelParams initialize(const FitData& data, std::size_t rank, std::uint64_t seed,
                       double lambda);

FitResult fit(const FitData& data, const ModelParams& start, const SolverOptions& options);
FitResult fit(const TemporalTensor& tensor, const SubgroupScheme& scheme, const ModelBases& bases,
              const CorrelationSpec& corr, const SolverOptions& options,
              const std::optional<ModelParams>& warm_start = std::nullopt);

// Jointly permutes the columns of every P^k and the rows of alpha so the
// first row of P^1 is non-increasing (later rows, then later modes, break ties).
ModelParams align_permutation(ModelParams params);

// How the working correlation is obtained: fixed when rho is given (or for
// independence), otherwise estimated from the residuals of an
// independence-weighted pilot fit, `rounds` times.
struct CorrelationPlan {
  CorrelationStructure structure = CorrelationStructure::independence;
  std::optional<double> rho;
  std::optional<double> variance;
  LagScale lag = LagScale::observation;
  std::size_t rounds = 1;
};

struct CorrelatedFit {
  ModelParams params;
  FitReport report;
  std::vector<FitReport> pilots;
  CorrelationSpec corr;
};

CorrelatedFit fit_with_correlation(const TemporalTensor& tensor, const SubgroupScheme& scheme,
                                   const ModelBases& bases, const CorrelationPlan& plan,
                                   const SolverOptions& options,
                                   const std::optional<ModelParams>& warm_start = std::nullopt);

// Observations at the last `trailing` distinct time points go to validation.
struct TimeSplit {
  TemporalTensor train;
  TemporalTensor validation;
};
TimeSplit split_by_time(const TemporalTensor& tensor, std::size_t trailing);

struct TuneEntry {
  double lambda;
  double rmse;  // +inf when the fit failed
  std::size_t iterations;
  std::string error;
  std::vector<FitReport> reports;  // pilot fits, then the final fit
};

struct TuneResult {
  double best_lambda;
  std::vector<TuneEntry> table;
};

// Fits each lambda in grid order (warm-started from the previous solution)
// and keeps the smallest validation RMSE; near-ties go to the smaller lambda.
TuneResult tune_lambda(const TemporalTensor& train, const TemporalTensor& validation,
                       const SubgroupScheme& scheme, const ModelBases& bases,
                       const CorrelationPlan& plan, std::span<const double> grid,
                       const SolverOptions& options);

}  // namespace dtrs
