// dtrs command line: simulate, fit, tune, predict, intervals, evaluate, bench-table1.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "dtrs/error.hpp"
#include "dtrs/evaluator.hpp"
#include "dtrs/ingest.hpp"
#include "dtrs/io.hpp"
#include "dtrs/kernels.hpp"
#include "dtrs/pipeline.hpp"
#include "dtrs/simulator.hpp"

namespace {

using namespace dtrs;

enum Exit { kOk = 0, kValidation = 1, kNumerical = 2 };

int g_verbosity = 1;

// key=value log lines on stderr.
class Log {
 public:
  Log(const char* level, const char* event) {
    const std::string_view l = level;
    enabled_ = l == "error" || l == "warn" || (l == "info" ? g_verbosity >= 1 : g_verbosity >= 2);
    line_ << "level=" << level << " event=" << event;
  }
  ~Log() {
    if (!enabled_) return;
    line_ << "\n";
    std::cerr << line_.str();
  }
  template <class T>
  Log& kv(const char* key, const T& value) {
    line_ << " " << key << "=";
    if constexpr (std::is_floating_point_v<T>)
      line_ << format_number(value);
    else if constexpr (std::is_convertible_v<T, std::string_view>)
      quote(value);
    else
      line_ << value;
    return *this;
  }

 private:
  void quote(std::string_view s) {
    if (s.find_first_of(" \"=") == std::string_view::npos && !s.empty()) {
      line_ << s;
      return;
    }
    line_ << '"';
    for (char c : s) {
      if (c == '"' || c == '\\') line_ << '\\';
      line_ << c;
    }
    line_ << '"';
  }
  std::ostringstream line_;
  bool enabled_ = true;
};

std::size_t default_threads() {
  if (const char* env = std::getenv("DTRS_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return 1;
}

struct Common {
  std::size_t threads = default_threads();
  std::optional<std::uint64_t> seed;
};

std::function<void(const IterationLog&)> iteration_logger() {
  if (g_verbosity < 2) return {};
  return [](const IterationLog& e) {
    Log("debug", "iteration")
        .kv("iter", e.iteration)
        .kv("step", e.step)
        .kv("block", e.block)
        .kv("objective", e.objective)
        .kv("J", e.improvement);
  };
}

FitConfig load_fit_config(const std::string& path, const Common& common,
                          std::optional<double> lambda) {
  FitConfig config = path.empty() ? FitConfig{} : fit_config_from_json(read_json_file(path));
  if (common.seed) config.hyper.seed = *common.seed;
  config.threads = common.threads;
  if (lambda) {
    config.hyper.lambda = *lambda;
    config.lambda_grid.clear();
  }
  config.hyper.validate();
  return config;
}

CsvSchema load_schema(const std::string& path, std::size_t order_hint) {
  if (path.empty()) return default_schema(order_hint, true);
  return schema_from_json(read_json_file(path));
}

void log_report(const char* event, const FitReport& r) {
  Log("info", event)
      .kv("iterations", r.iterations)
      .kv("converged", r.converged ? "true" : "false")
      .kv("objective", r.objective_trace.empty() ? 0.0 : r.objective_trace.back())
      .kv("lambda", r.final_lambda)
      .kv("frozen", r.frozen.size())
      .kv("skipped", r.skipped.size())
      .kv("wallclock", r.wallclock);
}

struct FitArgs {
  std::string data, schema, config, out_model, out_report, out_tuning;
  std::optional<double> lambda;
};

int run_fit(const FitArgs& a, const Common& common, bool tuning) {
  CsvSchema schema = load_schema(a.schema, 3);
  FitConfig config = load_fit_config(a.config, common, a.lambda);
  if (tuning && config.lambda_grid.empty())
    fail(ErrorKind::config, "tune needs a non-empty lambda_grid in the config");
  if (!tuning) config.lambda_grid.clear();

  IngestResult in = ingest_long_csv(a.data, schema);
  Log("info", "ingest")
      .kv("path", a.data)
      .kv("rows", in.rows)
      .kv("cells", in.tensor.num_cells())
      .kv("observations", in.tensor.num_observations());

  const auto start = std::chrono::steady_clock::now();
  FittedModel model = fit_model(in.tensor, in.scheme, config, iteration_logger());
  for (const FitReport& p : model.pilots) log_report("pilot_fit", p);
  log_report("fit", model.report);
  if (model.tuning) {
    for (const TuneEntry& e : model.tuning->table)
      Log("info", "tune_point").kv("lambda", e.lambda).kv("rmse", e.rmse).kv("iterations", e.iterations);
    Log("info", "tuned").kv("best_lambda", model.tuning->best_lambda);
  }
  if (!model.sandwich) Log("warn", "sandwich_unavailable").kv("reason", model.sandwich_error);
  Log("info", "done").kv("seconds",
                         std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());

  write_json_file(a.out_model, model_to_json(model, in.scale));
  if (!a.out_report.empty()) write_json_file(a.out_report, to_json(model.report));
  if (!a.out_tuning.empty() && model.tuning) write_json_file(a.out_tuning, to_json(*model.tuning));
  return kOk;
}

struct LoadedModel {
  FittedModel model;
  TimeScale scale;
};

LoadedModel load_model(const std::string& path) {
  TimeScale scale;
  FittedModel model = model_from_json(read_json_file(path), scale);
  return LoadedModel{std::move(model), scale};
}

CsvSchema schema_for_model(const std::string& path, const LoadedModel& m) {
  CsvSchema schema = load_schema(path, m.model.params.order());
  if (schema.modes.size() != m.model.params.order())
    fail(ErrorKind::config, "schema order does not match the model");
  return schema;
}

std::string index_header(const CsvSchema& schema) {
  std::string h;
  for (const auto& name : schema.modes) h += name + ",";
  return h + schema.time;
}

std::string index_prefix(const Query& q, const TimeScale& scale) {
  std::string s;
  for (Index i : q.indices) s += std::to_string(i + 1) + ",";
  return s + format_number(scale.original(q.time));
}

void check_query(const FittedModel& model, const Query& q) {
  for (std::size_t k = 0; k < q.indices.size(); ++k)
    if (q.indices[k] >= static_cast<Index>(model.scheme.mode_groups[k].size()))
      fail(ErrorKind::bounds, "query index " + std::to_string(q.indices[k] + 1) + " beyond mode " +
                                  std::to_string(k + 1) + " of the model");
}

struct QueryArgs {
  std::string model, queries, schema, out;
  double level = 0.95;
};

int run_predict(const QueryArgs& a) {
  const LoadedModel m = load_model(a.model);
  const CsvSchema schema = schema_for_model(a.schema, m);
  const auto queries = read_queries(a.queries, schema, m.scale);
  std::string out = index_header(schema) + ",yhat\n";
  for (const Query& q : queries) {
    check_query(m.model, q);
    out += index_prefix(q, m.scale) + "," + format_number(predict(m.model, q.indices, q.time)) + "\n";
  }
  write_text_file(a.out, out);
  Log("info", "predict").kv("queries", queries.size()).kv("out", a.out);
  return kOk;
}

int run_intervals(const QueryArgs& a) {
  if (!(a.level > 0.0 && a.level < 1.0)) fail(ErrorKind::config, "--level must be in (0, 1)");
  const LoadedModel m = load_model(a.model);
  const CsvSchema schema = schema_for_model(a.schema, m);
  const auto queries = read_queries(a.queries, schema, m.scale);
  std::string out = index_header(schema) + ",yhat,lower,upper,se_prediction,level,cold\n";
  std::size_t clamped = 0;
  for (const Query& q : queries) {
    check_query(m.model, q);
    const IntervalEstimate e = interval(m.model, q.indices, q.time, a.level);
    clamped += e.clamped;
    out += index_prefix(q, m.scale) + "," + format_number(e.yhat) + "," + format_number(e.lower) + "," +
           format_number(e.upper) + "," + format_number(e.se_prediction) + "," +
           format_number(e.level) + "," + (e.cold ? "1" : "0") + "\n";
  }
  write_text_file(a.out, out);
  Log("info", "intervals").kv("queries", queries.size()).kv("level", a.level).kv("clamped", clamped);
  return kOk;
}

struct EvalArgs {
  std::string model, data, schema, out_report, out_periods;
  double level = 0.95;
  bool no_intervals = false;
};

int run_evaluate(const EvalArgs& a) {
  const LoadedModel m = load_model(a.model);
  CsvSchema schema = schema_for_model(a.schema, m);
  std::vector<std::size_t> dims;
  for (const auto& g : m.model.scheme.mode_groups) dims.push_back(g.size());
  schema.dims = dims;
  schema.time_range = m.scale;
  const IngestResult in = ingest_long_csv(a.data, schema);

  std::optional<double> level;
  if (!a.no_intervals) {
    if (!(a.level > 0.0 && a.level < 1.0)) fail(ErrorKind::config, "--level must be in (0, 1)");
    level = a.level;
  }
  const MetricReport report = evaluate(m.model, in.tensor, level);
  Log l("info", "evaluate");
  l.kv("n", report.n_evaluated).kv("rmse", report.rmse).kv("mae", report.mae);
  if (report.picp) l.kv("picp", *report.picp);

  write_json_file(a.out_report, to_json(report));
  if (!a.out_periods.empty()) {
    std::string csv = "period,time,count,rmse,mae\n";
    for (const PeriodMetric& p : report.per_period)
      csv += std::to_string(p.period) + "," + format_number(m.scale.original(p.time)) + "," +
             std::to_string(p.count) + "," + format_number(p.rmse) + "," + format_number(p.mae) + "\n";
    write_text_file(a.out_periods, csv);
  }
  return kOk;
}

struct SimArgs {
  std::string config, out_train, out_test, out_truth, out_schema;
};

int run_simulate(const SimArgs& a, const Common& common) {
  SimConfig config = a.config.empty() ? SimConfig{} : sim_config_from_json(read_json_file(a.config));
  if (common.seed) config.seed = *common.seed;
  config.validate();
  const SimData data = simulate(config);
  const CsvSchema schema = simulation_schema(data);
  const TimeScale unit{0.0, 1.0};
  export_long_csv(a.out_train, data.train, data.scheme, unit, schema);
  export_long_csv(a.out_test, data.test, data.scheme, unit, schema);
  if (!a.out_truth.empty()) {
    Json truth = to_json(data.truth);
    truth["config"] = to_json(config);
    write_json_file(a.out_truth, truth);
  }
  if (!a.out_schema.empty()) write_json_file(a.out_schema, to_json(schema));
  Log("info", "simulate")
      .kv("seed", config.seed)
      .kv("train_observations", data.train.num_observations())
      .kv("test_observations", data.test.num_observations())
      .kv("cold_items", data.truth.cold_items.size());
  return kOk;
}

struct BenchArgs {
  std::string structure = "independent";
  std::size_t t2 = 8;
  std::size_t reps = 10;
  std::string sim_config, fit_config, out_table, out_long;
};

std::string cell(const Summary& s) { return format_number(s.mean) + "(" + format_number(s.sd) + ")"; }

int run_bench(const BenchArgs& a, const Common& common) {
  SimConfig sim = a.sim_config.empty() ? SimConfig{} : sim_config_from_json(read_json_file(a.sim_config));
  sim.error = parse_correlation(a.structure);
  if (sim.error == CorrelationStructure::exchangeable)
    fail(ErrorKind::config, "--structure must be independent or ar1");
  sim.t2 = a.t2;
  if (common.seed) sim.seed = *common.seed;
  sim.validate();
  if (a.reps == 0) fail(ErrorKind::config, "--reps must be positive");

  FitConfig base = a.fit_config.empty() ? FitConfig{} : fit_config_from_json(read_json_file(a.fit_config));
  if (base.lambda_grid.empty())
    for (int l = 1; l <= 20; ++l) base.lambda_grid.push_back(l);
  Method in{"DTRSin", base}, ar{"DTRSar", base};
  in.config.correlation.structure = CorrelationStructure::independence;
  ar.config.correlation.structure = CorrelationStructure::ar1;
  const std::vector<Method> methods{in, ar};

  const ReplicationResult result =
      run_replications(sim, methods, a.reps, common.threads, [](const ReplicationRow& row) {
        Log l(row.ok ? "info" : "warn", "replication");
        l.kv("rep", row.replication).kv("seed", row.seed).kv("method", row.method);
        if (row.ok)
          l.kv("rmse", row.metrics.rmse).kv("mae", row.metrics.mae).kv("picp", row.metrics.picp.value_or(0.0))
              .kv("lambda", row.lambda).kv("rho", row.rho);
        else
          l.kv("error", row.error);
        l.kv("seconds", row.seconds);
      });

  std::string table = "method,structure,t2,succeeded,failed,rmse,mae,picp\n";
  for (const AggregateRow& r : result.table) {
    table += r.method + "," + a.structure + "," + std::to_string(a.t2) + "," + std::to_string(r.succeeded) +
             "," + std::to_string(r.failed) + "," + cell(r.rmse) + "," + cell(r.mae) + "," + cell(r.picp) + "\n";
    Log("info", "aggregate")
        .kv("method", r.method)
        .kv("rmse_mean", r.rmse.mean)
        .kv("mae_mean", r.mae.mean)
        .kv("picp_mean", r.picp.mean);
  }
  write_text_file(a.out_table, table);

  if (!a.out_long.empty()) {
    std::string csv = "replication,seed,method,ok,period,time,count,rmse,mae,picp,lambda\n";
    for (const ReplicationRow& row : result.rows) {
      const std::string head = std::to_string(row.replication) + "," + std::to_string(row.seed) + "," +
                               row.method + "," + (row.ok ? "1" : "0") + ",";
      if (!row.ok) {
        csv += head + "all,,,,,,\n";
        continue;
      }
      csv += head + "all,," + std::to_string(row.metrics.n_evaluated) + "," + format_number(row.metrics.rmse) +
             "," + format_number(row.metrics.mae) + "," + format_number(row.metrics.picp.value_or(NAN)) + "," +
             format_number(row.lambda) + "\n";
      for (const PeriodMetric& p : row.metrics.per_period)
        csv += head + std::to_string(p.period) + "," + format_number(p.time) + "," + std::to_string(p.count) +
               "," + format_number(p.rmse) + "," + format_number(p.mae) + ",," + format_number(row.lambda) + "\n";
    }
    write_text_file(a.out_long, csv);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic tensor recommender: simulation, fitting, prediction and evaluation"};
  app.require_subcommand(1);
  Common common;
  std::string backend;
  app.add_option("--threads", common.threads, "Worker threads (default: $DTRS_THREADS or 1)")
      ->check(CLI::PositiveNumber);
  app.add_option("--seed", common.seed, "Seed overriding the config seed");
  app.add_option("--kernel", backend, "Kernel backend: scalar, avx2 or neon (default: detected)");
  app.add_flag_function("-v,--verbose", [](std::int64_t n) { g_verbosity = 1 + static_cast<int>(n); },
                        "Log every MBI iteration");
  app.add_flag_function("-q,--quiet", [](std::int64_t) { g_verbosity = 0; }, "Only log errors");

  SimArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Draw a simulated train/test split");
  c_sim->add_option("--config", sim.config, "Simulation config JSON")->check(CLI::ExistingFile);
  c_sim->add_option("--out-train", sim.out_train, "Training CSV")->required();
  c_sim->add_option("--out-test", sim.out_test, "Test CSV")->required();
  c_sim->add_option("--out-truth", sim.out_truth, "True parameters JSON");
  c_sim->add_option("--out-schema", sim.out_schema, "Schema JSON for the CSVs");

  FitArgs fit, tune;
  auto add_fit_options = [](CLI::App* c, FitArgs& a) {
    c->add_option("--data", a.data, "Long-format training CSV")->required();
    c->add_option("--schema", a.schema, "Schema JSON (default columns i1..id,time,value,g1..gd)");
    c->add_option("--config", a.config, "Fit config JSON");
    c->add_option("--out-model", a.out_model, "Model JSON")->required();
    c->add_option("--out-report", a.out_report, "FitReport JSON");
  };
  auto* c_fit = app.add_subcommand("fit", "Fit at a fixed lambda");
  add_fit_options(c_fit, fit);
  c_fit->add_option("--lambda", fit.lambda, "Penalty overriding the config")->check(CLI::NonNegativeNumber);
  auto* c_tune = app.add_subcommand("tune", "Choose lambda on trailing periods, then refit");
  add_fit_options(c_tune, tune);
  c_tune->add_option("--out-tuning", tune.out_tuning, "Validation RMSE per lambda JSON");

  QueryArgs pred, ivl;
  auto add_query_options = [](CLI::App* c, QueryArgs& a) {
    c->add_option("--model", a.model, "Model JSON")->required();
    c->add_option("--queries", a.queries, "CSV of index columns and time")->required();
    c->add_option("--schema", a.schema, "Schema JSON naming the columns");
    c->add_option("--out", a.out, "Output CSV")->required();
  };
  auto* c_pred = app.add_subcommand("predict", "Point predictions");
  add_query_options(c_pred, pred);
  auto* c_ivl = app.add_subcommand("intervals", "Prediction intervals");
  add_query_options(c_ivl, ivl);
  c_ivl->add_option("--level", ivl.level, "Nominal coverage")->capture_default_str();

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("evaluate", "RMSE, MAE and PICP on held-out data");
  c_eval->add_option("--model", ev.model, "Model JSON")->required();
  c_eval->add_option("--data", ev.data, "Long-format test CSV")->required();
  c_eval->add_option("--schema", ev.schema, "Schema JSON");
  c_eval->add_option("--level", ev.level, "Interval level for PICP")->capture_default_str();
  c_eval->add_flag("--no-intervals", ev.no_intervals, "Skip PICP");
  c_eval->add_option("--out-report", ev.out_report, "MetricReport JSON")->required();
  c_eval->add_option("--out-periods", ev.out_periods, "Per-period CSV");

  BenchArgs bench;
  auto* c_bench = app.add_subcommand("bench-table1", "Replicated simulation comparing DTRSin and DTRSar");
  c_bench->add_option("--structure", bench.structure, "True error structure: independent or ar1")->capture_default_str();
  c_bench->add_option("--t2", bench.t2, "Number of test periods")->capture_default_str();
  c_bench->add_option("--reps", bench.reps, "Replications")->capture_default_str();
  c_bench->add_option("--sim-config", bench.sim_config, "Simulation config JSON");
  c_bench->add_option("--fit-config", bench.fit_config, "Fit config JSON (default lambda grid 1..20)");
  c_bench->add_option("--out-table", bench.out_table, "Aggregate CSV, mean(sd)")->required();
  c_bench->add_option("--out-long", bench.out_long, "One row per replication, method and period");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (!backend.empty()) {
      kernels::Backend b;
      if (!kernels::parse_backend(backend, b)) fail(ErrorKind::config, "unknown kernel backend '" + backend + "'");
      kernels::set_backend(b);
    }
    if (*c_sim) return run_simulate(sim, common);
    if (*c_fit) return run_fit(fit, common, false);
    if (*c_tune) return run_fit(tune, common, true);
    if (*c_pred) return run_predict(pred);
    if (*c_ivl) return run_intervals(ivl);
    if (*c_eval) return run_evaluate(ev);
    if (*c_bench) return run_bench(bench, common);
  } catch (const Error& e) {
    Log("error", "failed").kv("kind", error_kind_name(e.kind())).kv("message", std::string(e.what()));
    return is_numerical(e.kind()) ? kNumerical : kValidation;
  } catch (const std::exception& e) {
    Log("error", "failed").kv("kind", "internal").kv("message", std::string(e.what()));
    return kValidation;
  }
  return kValidation;
}
