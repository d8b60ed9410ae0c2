#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dtrs/inference.hpp"
#include "dtrs/model.hpp"
#include "dtrs/solver.hpp"

namespace dtrs {

struct FitConfig {
  HyperParams hyper;
  BasisConfig basis;
  CorrelationPlan correlation;
  // Tune lambda over these values when non-empty; otherwise use hyper.lambda.
  std::vector<double> lambda_grid;
  std::size_t validation_periods = 4;
  MbiMode mode = MbiMode::max_block;
  ColdVariance cold_variance = ColdVariance::subgroup;
  std::size_t threads = 1;
};

// Everything needed to predict and to form intervals.
struct FittedModel {
  ModelParams params;
  SubgroupScheme scheme;
  ModelBases bases;
  CorrelationSpec corr;
  double lambda = 0.0;
  ColdVariance cold_variance = ColdVariance::subgroup;
  std::optional<SandwichCovariance> sandwich;
  std::string sandwich_error;
  FitReport report;
  std::vector<FitReport> pilots;
  std::optional<TuneResult> tuning;
};

// Builds bases from the training data, optionally tunes lambda on a trailing
// time split, then refits from scratch on all training data at the chosen
// lambda (so a plain fit at that lambda gives the same model). Factor columns
// are put in canonical order and the sandwich covariance is attached.
FittedModel fit_model(const TemporalTensor& train, const SubgroupScheme& scheme,
                      const FitConfig& config,
                      const std::function<void(const IterationLog&)>& log = {});

double predict(const FittedModel& model, std::span<const Index> indices, double t);

// Throws ridge_degenerate when the model has no sandwich covariance.
IntervalEstimate interval(const FittedModel& model, std::span<const Index> indices, double t,
                          double level);

}  // namespace dtrs
