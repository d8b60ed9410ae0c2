#include "dtrs/evaluator.hpp"

#include <chrono>
#include <cmath>
#include <map>
#include <mutex>

#include "dtrs/error.hpp"
#include "parallel.hpp"

namespace dtrs {
namespace {

void check_pairs(std::size_t a, std::size_t b) {
  if (a != b) fail(ErrorKind::config, "metric inputs differ in length");
  if (a == 0) fail(ErrorKind::insufficient_data, "no evaluation pairs");
}

}  // namespace

double rmse(std::span<const double> y, std::span<const double> yhat) {
  check_pairs(y.size(), yhat.size());
  double ss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) ss += (y[i] - yhat[i]) * (y[i] - yhat[i]);
  return std::sqrt(ss / static_cast<double>(y.size()));
}

double mae(std::span<const double> y, std::span<const double> yhat) {
  check_pairs(y.size(), yhat.size());
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += std::abs(y[i] - yhat[i]);
  return s / static_cast<double>(y.size());
}

double picp(std::span<const IntervalEstimate> intervals, std::span<const double> truth) {
  check_pairs(intervals.size(), truth.size());
  std::size_t inside = 0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (truth[i] >= intervals[i].lower && truth[i] <= intervals[i].upper) ++inside;
  return static_cast<double>(inside) / static_cast<double>(truth.size());
}

MetricReport evaluate(const FittedModel& model, const TemporalTensor& data,
                      std::optional<double> level) {
  std::vector<double> y, yhat, times;
  std::vector<IntervalEstimate> bands;
  y.reserve(data.num_observations());
  yhat.reserve(data.num_observations());
  for (const Cell& c : data.cells())
    for (const TimeValue& tv : c.series) {
      y.push_back(tv.value);
      times.push_back(tv.time);
      if (level) {
        bands.push_back(interval(model, c.index, tv.time, *level));
        yhat.push_back(bands.back().yhat);
      } else {
        yhat.push_back(predict(model, c.index, tv.time));
      }
    }

  MetricReport report;
  report.rmse = rmse(y, yhat);
  report.mae = mae(y, yhat);
  report.n_evaluated = y.size();
  if (level) {
    report.level = *level;
    report.picp = picp(bands, y);
  }

  struct Acc {
    std::size_t n = 0;
    double ss = 0.0, sa = 0.0;
  };
  std::map<double, Acc> by_time;
  for (std::size_t i = 0; i < y.size(); ++i) {
    Acc& a = by_time[times[i]];
    const double e = y[i] - yhat[i];
    ++a.n;
    a.ss += e * e;
    a.sa += std::abs(e);
  }
  std::size_t period = 0;
  for (const auto& [t, a] : by_time) {
    const auto n = static_cast<double>(a.n);
    report.per_period.push_back({++period, t, a.n, std::sqrt(a.ss / n), a.sa / n});
  }
  return report;
}

Summary summarize(std::span<const double> values) {
  Summary s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() < 2) return s;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  return s;
}

ReplicationResult run_replications(const SimConfig& base, std::span<const Method> methods,
                                   std::size_t reps, std::size_t threads,
                                   const std::function<void(const ReplicationRow&)>& progress,
                                   std::span<const double> extra_levels) {
  if (reps < 1) fail(ErrorKind::config, "replication count must be >= 1");
  if (methods.empty()) fail(ErrorKind::config, "no methods to run");
  base.validate();

  ReplicationResult out;
  out.rows.resize(reps * methods.size());
  std::mutex mutex;
  detail::parallel_ranges(reps, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t rep = begin; rep < end; ++rep) {
      SimConfig sim = base;
      sim.seed = base.seed + rep + 1;
      const SimData data = simulate(sim);
      for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        ReplicationRow& row = out.rows[rep * methods.size() + mi];
        row.replication = rep + 1;
        row.seed = sim.seed;
        row.method = methods[mi].name;
        const auto t0 = std::chrono::steady_clock::now();
        try {
          FitConfig cfg = methods[mi].config;
          cfg.threads = 1;
          const FittedModel model = fit_model(data.train, data.scheme, cfg);
          row.metrics = evaluate(model, data.test, 0.95);
          for (double level : extra_levels)
            row.extra_picp.push_back(evaluate(model, data.test, level).picp.value());
          row.lambda = model.lambda;
          row.rho = model.corr.rho;
          if (model.tuning)
            for (const TuneEntry& e : model.tuning->table)
              row.fits.insert(row.fits.end(), e.reports.begin(), e.reports.end());
          row.fits.insert(row.fits.end(), model.pilots.begin(), model.pilots.end());
          row.fits.push_back(model.report);
          row.ok = true;
        } catch (const Error& e) {
          row.error = e.what();
        }
        row.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (progress) {
          std::lock_guard lock(mutex);
          progress(row);
        }
      }
    }
  });

  for (const Method& m : methods) {
    AggregateRow agg;
    agg.method = m.name;
    std::vector<double> r, a, p;
    for (const ReplicationRow& row : out.rows) {
      if (row.method != m.name) continue;
      if (!row.ok) {
        ++agg.failed;
        continue;
      }
      ++agg.succeeded;
      r.push_back(row.metrics.rmse);
      a.push_back(row.metrics.mae);
      if (row.metrics.picp) p.push_back(*row.metrics.picp);
    }
    agg.rmse = summarize(r);
    agg.mae = summarize(a);
    agg.picp = summarize(p);
    out.table.push_back(std::move(agg));
  }
  return out;
}

}  // namespace dtrs
