#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dtrs/pipeline.hpp"
#include "dtrs/simulator.hpp"

namespace dtrs {

double rmse(std::span<const double> y, std::span<const double> yhat);
double mae(std::span<const double> y, std::span<const double> yhat);
// Fraction of truths inside [lower, upper].
double picp(std::span<const IntervalEstimate> intervals, std::span<const double> truth);

struct PeriodMetric {
  std::size_t period;  // 1-based rank of the time point within the evaluated set
  double time;
  std::size_t count;
  double rmse;
  double mae;
};

struct MetricReport {
  double rmse = 0.0;
  double mae = 0.0;
  std::optional<double> picp;
  double level = 0.95;
  std::vector<PeriodMetric> per_period;
  std::size_t n_evaluated = 0;
};

// Metrics over every observation of `data`; PICP only when a level is given.
MetricReport evaluate(const FittedModel& model, const TemporalTensor& data,
                      std::optional<double> level = 0.95);

struct Method {
  std::string name;
  FitConfig config;
};

struct ReplicationRow {
  std::size_t replication;  // 1-based
  std::uint64_t seed;
  std::string method;
  bool ok = false;
  std::string error;
  MetricReport metrics;
  double lambda = 0.0;
  double rho = 0.0;
  std::vector<FitReport> fits;  // tuning fits, pilot fits, then the final fit
  std::vector<double> extra_picp;  // one per extra level
  double seconds = 0.0;
};

struct Summary {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation; 0 for a single value
};

Summary summarize(std::span<const double> values);

struct AggregateRow {
  std::string method;
  std::size_t succeeded = 0;
  std::size_t failed = 0;
  Summary rmse;
  Summary mae;
  Summary picp;
};

struct ReplicationResult {
  std::vector<ReplicationRow> rows;  // replication-major, methods in input order
  std::vector<AggregateRow> table;
};

// Simulation seeds are base.seed + 1, ..., base.seed + reps. Replications run
// on up to `threads` workers; each fit is single-threaded. Failed runs are
// kept as rows with ok = false and left out of the aggregates. PICP is also
// recorded at each of `extra_levels`.
ReplicationResult run_replications(const SimConfig& base, std::span<const Method> methods,
                                   std::size_t reps, std::size_t threads = 1,
                                   const std::function<void(const ReplicationRow&)>& progress = {},
                                   std::span<const double> extra_levels = {});

}  // namespace dtrs
