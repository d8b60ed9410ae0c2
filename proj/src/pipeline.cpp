#include "dtrs/pipeline.hpp"

#include "dtrs/error.hpp"

namespace dtrs {

FittedModel fit_model(const TemporalTensor& train, const SubgroupScheme& scheme,
                      const FitConfig& config, const std::function<void(const IterationLog&)>& log) {
  config.hyper.validate();
  FittedModel model{.params = {}, .scheme = scheme, .bases = make_bases(train, config.basis)};

  SolverOptions options;
  options.hyper = config.hyper;
  options.mode = config.mode;
  options.threads = config.threads;

  if (!config.lambda_grid.empty()) {
    const TimeSplit split = split_by_time(train, config.validation_periods);
    SolverOptions quiet = options;
    model.tuning = tune_lambda(split.train, split.validation, scheme, model.bases,
                               config.correlation, config.lambda_grid, quiet);
    options.hyper.lambda = model.tuning->best_lambda;
  }
  options.log = log;

  CorrelatedFit fitted =
      fit_with_correlation(train, scheme, model.bases, config.correlation, options);
  model.params = align_permutation(std::move(fitted.params));
  model.corr = fitted.corr;
  model.lambda = options.hyper.lambda;
  model.cold_variance = config.cold_variance;
  model.report = std::move(fitted.report);
  model.pilots = std::move(fitted.pilots);
  try {
    model.sandwich =
        sandwich_covariance(model.params, train, scheme, model.bases, model.corr, model.lambda);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::ridge_degenerate) throw;
    model.sandwich_error = e.what();
  }
  return model;
}

double predict(const FittedModel& model, std::span<const Index> indices, double t) {
  return predict_cell(model.params, model.scheme, model.bases, indices, t);
}

IntervalEstimate interval(const FittedModel& model, std::span<const Index> indices, double t,
                          double level) {
  if (!model.sandwich)
    fail(ErrorKind::ridge_degenerate,
         model.sandwich_error.empty() ? "model has no sandwich covariance" : model.sandwich_error);
  return prediction_interval(model.params, model.scheme, model.bases, *model.sandwich, indices, t,
                             level, model.cold_variance);
}

}  // namespace dtrs
