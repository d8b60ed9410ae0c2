#include "dtrs/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string_view>

#include "dtrs/error.hpp"

namespace dtrs {
namespace {

void check_keys(const Json& j, std::initializer_list<std::string_view> allowed,
                const std::string& what) {
  if (!j.is_object()) fail(ErrorKind::config, what + " must be a JSON object");
  for (const auto& item : j.items())
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end())
      fail(ErrorKind::config, "unknown key '" + item.key() + "' in " + what);
}

template <class T>
T get(const Json& j, const std::string& key, const std::string& what) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::config, what + " key '" + key + "': " + e.what());
  }
}

template <class T>
void read_opt(const Json& j, const std::string& key, const std::string& what, T& out) {
  if (j.contains(key)) out = get<T>(j, key, what);
}

std::size_t get_count(const Json& j, const std::string& key, const std::string& what) {
  const Json& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0)
    fail(ErrorKind::config, what + " key '" + key + "' must be a non-negative integer");
  return v.get<std::size_t>();
}

void dump(const Json& v, int depth, std::string& out) {
  const std::string pad(static_cast<std::size_t>(2 * (depth + 1)), ' ');
  const std::string close(static_cast<std::size_t>(2 * depth), ' ');
  switch (v.type()) {
    case Json::value_t::number_float:
      out += format_number(v.get<double>());
      return;
    case Json::value_t::array: {
      if (v.empty()) {
        out += "[]";
        return;
      }
      const bool flat = std::all_of(v.begin(), v.end(), [](const Json& x) { return x.is_primitive(); });
      if (flat) {
        out += "[";
        for (std::size_t i = 0; i < v.size(); ++i) {
          if (i) out += ", ";
          dump(v[i], depth + 1, out);
        }
        out += "]";
        return;
      }
      out += "[\n";
      for (std::size_t i = 0; i < v.size(); ++i) {
        out += pad;
        dump(v[i], depth + 1, out);
        out += i + 1 < v.size() ? ",\n" : "\n";
      }
      out += close + "]";
      return;
    }
    case Json::value_t::object: {
      if (v.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      std::size_t i = 0;
      for (auto it = v.begin(); it != v.end(); ++it, ++i) {
        out += pad + Json(it.key()).dump() + ": ";
        dump(it.value(), depth + 1, out);
        out += i + 1 < v.size() ? ",\n" : "\n";
      }
      out += close + "}";
      return;
    }
    default:
      out += v.dump();
  }
}

Json matrix_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from(const Json& j, const std::string& what, Eigen::Index cols = -1) {
  if (!j.is_array()) fail(ErrorKind::config, what + " must be an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (cols < 0) cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      fail(ErrorKind::config, what + " has ragged rows");
    for (Eigen::Index c = 0; c < cols; ++c) {
      const Json& x = row[static_cast<std::size_t>(c)];
      if (!x.is_number()) fail(ErrorKind::config, what + " holds a non-numeric entry");
      m(i, c) = x.get<double>();
    }
  }
  return m;
}

Json vector_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Eigen::VectorXd vector_from(const Json& j, const std::string& what) {
  if (!j.is_array()) fail(ErrorKind::config, what + " must be an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) fail(ErrorKind::config, what + " holds a non-numeric entry");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

Json labels_json(const std::vector<int>& labels) {
  Json a = Json::array();
  for (int g : labels) a.push_back(g == kUnassignedGroup ? 0 : g + 1);
  return a;
}

std::vector<int> labels_from(const Json& j, const std::string& what) {
  if (!j.is_array()) fail(ErrorKind::config, what + " must be an array");
  std::vector<int> out;
  for (const Json& x : j) {
    if (!x.is_number_integer() || x.get<int>() < 0)
      fail(ErrorKind::config, what + " labels must be integers >= 0 (0 = unassigned)");
    out.push_back(x.get<int>() - 1);
  }
  return out;
}

}  // namespace

std::string format_number(double x) {
  if (!std::isfinite(x)) return "null";
  if (x == 0.0) return "0";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

std::string canonical_json(const Json& value) {
  std::string out;
  dump(value, 0, out);
  out += "\n";
  return out;
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::parse, path + ": " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write '" + path + "'");
  out << text;
  if (!out) fail(ErrorKind::io, "write failed for '" + path + "'");
}

void write_json_file(const std::string& path, const Json& value) {
  write_text_file(path, canonical_json(value));
}

SimConfig sim_config_from_json(const Json& j) {
  const std::string what = "simulation config";
  check_keys(j, {"n", "m", "r", "t1", "t2", "pi_m", "pi_cs", "error", "rho", "seed",
                 "time_assignment"},
             what);
  SimConfig c;
  read_opt(j, "n", what, c.n);
  read_opt(j, "m", what, c.m);
  if (j.contains("r")) c.r = get_count(j, "r", what);
  if (j.contains("t1")) c.t1 = get_count(j, "t1", what);
  if (j.contains("t2")) c.t2 = get_count(j, "t2", what);
  read_opt(j, "pi_m", what, c.pi_m);
  read_opt(j, "pi_cs", what, c.pi_cs);
  if (j.contains("error")) c.error = parse_correlation(get<std::string>(j, "error", what));
  read_opt(j, "rho", what, c.rho);
  if (j.contains("seed")) c.seed = get_count(j, "seed", what);
  if (j.contains("time_assignment"))
    c.time_assignment = parse_time_assignment(get<std::string>(j, "time_assignment", what));
  c.validate();
  return c;
}

Json to_json(const SimConfig& c) {
  return Json{{"n", c.n},
              {"m", c.m},
              {"r", c.r},
              {"t1", c.t1},
              {"t2", c.t2},
              {"pi_m", c.pi_m},
              {"pi_cs", c.pi_cs},
              {"error", c.error == CorrelationStructure::ar1 ? "ar1" : "independent"},
              {"rho", c.rho},
              {"seed", c.seed},
              {"time_assignment", std::string(to_string(c.time_assignment))}};
}

FitConfig fit_config_from_json(const Json& j) {
  const std::string what = "fit config";
  check_keys(j, {"r", "lambda", "lambda_grid", "epsilon", "max_iter", "seed", "correlation", "rho",
                 "variance", "reestimate", "ar1_lag", "kappa", "knots", "knot_placement", "basis",
                 "group_knots", "validation_periods", "mbi_mode", "cold_variance", "threads"},
             what);
  FitConfig c;
  if (j.contains("r")) c.hyper.rank = get_count(j, "r", what);
  read_opt(j, "lambda", what, c.hyper.lambda);
  read_opt(j, "lambda_grid", what, c.lambda_grid);
  read_opt(j, "epsilon", what, c.hyper.epsilon);
  if (j.contains("max_iter")) c.hyper.max_iter = get_count(j, "max_iter", what);
  if (j.contains("seed")) c.hyper.seed = get_count(j, "seed", what);
  if (j.contains("correlation"))
    c.correlation.structure = parse_correlation(get<std::string>(j, "correlation", what));
  if (j.contains("rho")) c.correlation.rho = get<double>(j, "rho", what);
  if (j.contains("variance")) c.correlation.variance = get<double>(j, "variance", what);
  if (j.contains("reestimate")) c.correlation.rounds = get_count(j, "reestimate", what);
  if (j.contains("ar1_lag")) c.correlation.lag = parse_lag_scale(get<std::string>(j, "ar1_lag", what));
  if (j.contains("kappa")) c.basis.degree = static_cast<int>(get_count(j, "kappa", what));
  if (j.contains("knots")) c.basis.knots = get_count(j, "knots", what);
  if (j.contains("group_knots")) c.basis.group_knots = get_count(j, "group_knots", what);
  if (j.contains("knot_placement"))
    c.basis.placement = parse_knot_placement(get<std::string>(j, "knot_placement", what));
  if (j.contains("basis")) c.basis.family = parse_basis_family(get<std::string>(j, "basis", what));
  if (j.contains("validation_periods"))
    c.validation_periods = get_count(j, "validation_periods", what);
  if (j.contains("mbi_mode")) {
    const auto m = get<std::string>(j, "mbi_mode", what);
    if (m == "max_block") c.mode = MbiMode::max_block;
    else if (m == "cyclic") c.mode = MbiMode::cyclic;
    else fail(ErrorKind::config, "mbi_mode must be 'max_block' or 'cyclic'");
  }
  if (j.contains("cold_variance"))
    c.cold_variance = parse_cold_variance(get<std::string>(j, "cold_variance", what));
  if (j.contains("threads")) c.threads = std::max<std::size_t>(1, get_count(j, "threads", what));
  if (c.basis.degree < 1 || c.basis.degree > 5) fail(ErrorKind::config, "kappa must be in 1..5");
  c.hyper.validate();
  if (c.correlation.rounds < 1) fail(ErrorKind::config, "reestimate must be >= 1");
  return c;
}

Json to_json(const FitConfig& c) {
  Json j{{"r", c.hyper.rank},
         {"lambda", c.hyper.lambda},
         {"lambda_grid", c.lambda_grid},
         {"epsilon", c.hyper.epsilon},
         {"max_iter", c.hyper.max_iter},
         {"seed", c.hyper.seed},
         {"correlation", std::string(to_string(c.correlation.structure))},
         {"reestimate", c.correlation.rounds},
         {"ar1_lag", std::string(to_string(c.correlation.lag))},
         {"kappa", c.basis.degree},
         {"knot_placement", std::string(to_string(c.basis.placement))},
         {"basis", std::string(to_string(c.basis.family))},
         {"validation_periods", c.validation_periods},
         {"mbi_mode", c.mode == MbiMode::max_block ? "max_block" : "cyclic"},
         {"cold_variance", std::string(to_string(c.cold_variance))}};
  if (c.correlation.rho) j["rho"] = *c.correlation.rho;
  if (c.correlation.variance) j["variance"] = *c.correlation.variance;
  if (c.basis.knots) j["knots"] = *c.basis.knots;
  if (c.basis.group_knots) j["group_knots"] = *c.basis.group_knots;
  return j;
}

Json to_json(const TimeGroups& g) {
  if (g.kind() == TimeGroups::Kind::periodic)
    return Json{{"kind", "periodic"},
                {"period", g.period()},
                {"origin", g.origin()},
                {"count", g.count()}};
  return Json{{"kind", "intervals"}, {"breakpoints", g.breakpoints()}, {"labels", labels_json(g.labels())}};
}

TimeGroups time_groups_from_json(const Json& j) {
  const std::string what = "time_groups";
  if (!j.is_object()) fail(ErrorKind::config, what + " must be a JSON object");
  const std::string kind = j.contains("kind") ? get<std::string>(j, "kind", what) : "intervals";
  if (kind == "periodic") {
    check_keys(j, {"kind", "period", "origin", "count"}, what);
    return TimeGroups::periodic(get<double>(j, "period", what),
                                j.contains("origin") ? get<double>(j, "origin", what) : 0.0,
                                get<int>(j, "count", what));
  }
  if (kind != "intervals") fail(ErrorKind::config, "time_groups kind must be intervals or periodic");
  check_keys(j, {"kind", "breakpoints", "labels"}, what);
  std::vector<int> labels = labels_from(j.at("labels"), what);
  for (int l : labels)
    if (l < 0) fail(ErrorKind::config, "time group labels must be >= 1");
  return TimeGroups::intervals(get<std::vector<double>>(j, "breakpoints", what), std::move(labels));
}

Json to_json(const SubgroupScheme& s) {
  Json groups = Json::array();
  for (const auto& g : s.mode_groups) groups.push_back(labels_json(g));
  return Json{{"mode_groups", groups}, {"group_counts", s.group_counts}, {"time_groups", to_json(s.time_groups)}};
}

SubgroupScheme scheme_from_json(const Json& j) {
  const std::string what = "scheme";
  check_keys(j, {"mode_groups", "group_counts", "time_groups"}, what);
  SubgroupScheme s;
  for (const Json& g : j.at("mode_groups")) s.mode_groups.push_back(labels_from(g, what));
  s.group_counts = get<std::vector<int>>(j, "group_counts", what);
  s.time_groups = time_groups_from_json(j.at("time_groups"));
  return s;
}

CsvSchema schema_from_json(const Json& j) {
  const std::string what = "schema";
  check_keys(j, {"modes", "time", "value", "groups", "dims", "time_range", "time_groups",
                 "mode_groups"},
             what);
  CsvSchema s;
  s.modes = get<std::vector<std::string>>(j, "modes", what);
  if (s.modes.empty()) fail(ErrorKind::config, "schema needs at least one mode column");
  read_opt(j, "time", what, s.time);
  read_opt(j, "value", what, s.value);
  read_opt(j, "groups", what, s.groups);
  if (j.contains("dims")) s.dims = get<std::vector<std::size_t>>(j, "dims", what);
  if (j.contains("time_range")) {
    const auto r = get<std::vector<double>>(j, "time_range", what);
    if (r.size() != 2 || !(r[1] > r[0])) fail(ErrorKind::config, "time_range must be [min, max] with min < max");
    s.time_range = TimeScale{r[0], r[1]};
  }
  if (j.contains("time_groups")) s.time_groups = time_groups_from_json(j.at("time_groups"));
  if (j.contains("mode_groups")) {
    std::vector<std::vector<int>> groups;
    for (const Json& g : j.at("mode_groups")) groups.push_back(labels_from(g, what));
    s.mode_groups = std::move(groups);
  }
  return s;
}

Json to_json(const CsvSchema& s) {
  Json j{{"modes", s.modes}, {"time", s.time}, {"value", s.value}, {"groups", s.groups}};
  if (s.dims) j["dims"] = *s.dims;
  if (s.time_range) j["time_range"] = {s.time_range->t_min, s.time_range->t_max};
  if (s.time_groups) j["time_groups"] = to_json(*s.time_groups);
  if (s.mode_groups) {
    Json groups = Json::array();
    for (const auto& g : *s.mode_groups) groups.push_back(labels_json(g));
    j["mode_groups"] = groups;
  }
  return j;
}

CsvSchema simulation_schema(const SimData& data) {
  CsvSchema s = default_schema(3, true);
  s.dims = data.train.dims();
  s.time_range = TimeScale{0.0, 1.0};
  s.time_groups = data.scheme.time_groups;
  s.mode_groups = data.scheme.mode_groups;
  return s;
}

Json to_json(const SimTruth& t) {
  Json factors = Json::array(), subgroup = Json::array();
  for (const auto& p : t.factors) factors.push_back(matrix_json(p));
  for (const auto& q : t.subgroup) subgroup.push_back(vector_json(q));
  Json cold = Json::array();
  for (Index i : t.cold_items) cold.push_back(i + 1);
  return Json{{"factors", factors},
              {"subgroup", subgroup},
              {"times", t.times},
              {"time_labels", labels_json(t.time_labels)},
              {"cold_items", cold}};
}

Json to_json(const FitReport& r) {
  Json trace = Json::array(), gains = Json::array();
  for (double v : r.objective_trace) trace.push_back(v);
  for (double v : r.max_improvement) gains.push_back(v);
  return Json{{"iterations", r.iterations},
              {"objective_trace", trace},
              {"accepted_blocks", r.accepted_blocks},
              {"max_improvement", gains},
              {"converged", r.converged},
              {"final_lambda", r.final_lambda},
              {"frozen", r.frozen},
              {"skipped", r.skipped}};
}

Json to_json(const TuneResult& t) {
  Json table = Json::array();
  for (const TuneEntry& e : t.table) {
    Json row{{"lambda", e.lambda}, {"rmse", e.rmse}, {"iterations", e.iterations}};
    if (!e.error.empty()) row["error"] = e.error;
    table.push_back(std::move(row));
  }
  return Json{{"best_lambda", t.best_lambda}, {"table", table}};
}

Json to_json(const MetricReport& m) {
  Json periods = Json::array();
  for (const PeriodMetric& p : m.per_period)
    periods.push_back(Json{{"period", p.period}, {"time", p.time}, {"count", p.count}, {"rmse", p.rmse}, {"mae", p.mae}});
  Json j{{"rmse", m.rmse}, {"mae", m.mae}, {"n_evaluated", m.n_evaluated}, {"per_period", periods}};
  if (m.picp) {
    j["picp"] = *m.picp;
    j["level"] = m.level;
  }
  return j;
}

Json to_json(const SplineBasis& b) {
  return Json{{"degree", b.degree()},
              {"knots", std::vector<double>(b.knots().begin(), b.knots().end())},
              {"family", std::string(to_string(b.family()))},
              {"placement", std::string(to_string(b.placement()))}};
}

SplineBasis basis_from_json(const Json& j) {
  const std::string what = "basis";
  check_keys(j, {"degree", "knots", "family", "placement"}, what);
  return SplineBasis(get<int>(j, "degree", what), get<std::vector<double>>(j, "knots", what),
                     parse_basis_family(get<std::string>(j, "family", what)),
                     parse_knot_placement(get<std::string>(j, "placement", what)));
}

Json model_to_json(const FittedModel& m, const TimeScale& scale) {
  Json factors = Json::array(), subgroup = Json::array();
  for (const auto& p : m.params.factors) factors.push_back(matrix_json(p));
  for (const auto& q : m.params.subgroup) subgroup.push_back(vector_json(q));
  std::vector<std::size_t> dims;
  for (const auto& p : m.params.factors) dims.push_back(static_cast<std::size_t>(p.rows()));
  Json j{{"format", "dtrs-model"},
         {"version", 1},
         {"dims", dims},
         {"rank", m.params.rank()},
         {"factors", factors},
         {"subgroup", subgroup},
         {"alpha", matrix_json(m.params.alpha)},
         {"beta", matrix_json(m.params.beta)},
         {"bases", Json{{"trend", to_json(m.bases.trend)}, {"group", to_json(m.bases.group)}}},
         {"scheme", to_json(m.scheme)},
         {"correlation", Json{{"structure", std::string(to_string(m.corr.structure))},
                              {"rho", m.corr.rho},
                              {"variance", m.corr.variance},
                              {"lag", std::string(to_string(m.corr.lag))}}},
         {"lambda", m.lambda},
         {"cold_variance", std::string(to_string(m.cold_variance))},
         {"time_scale", Json{{"t_min", scale.t_min}, {"t_max", scale.t_max}}},
         {"report", to_json(m.report)}};
  if (m.sandwich)
    j["sandwich"] = Json{{"cov_gamma", matrix_json(m.sandwich->cov_gamma)},
                         {"sigma2_train", m.sandwich->sigma2_train},
                         {"sigma2_subgroup", m.sandwich->sigma2_subgroup}};
  else
    j["sandwich_error"] = m.sandwich_error;
  Json pilots = Json::array();
  for (const FitReport& p : m.pilots) pilots.push_back(to_json(p));
  j["pilot_reports"] = pilots;
  if (m.tuning) j["tuning"] = to_json(*m.tuning);
  return j;
}

FittedModel model_from_json(const Json& j, TimeScale& scale) {
  const std::string what = "model";
  if (!j.is_object() || !j.contains("format") || j.at("format") != "dtrs-model")
    fail(ErrorKind::parse, "not a model file");
  const Json& bases = j.at("bases");
  FittedModel m{.params = {},
                .scheme = scheme_from_json(j.at("scheme")),
                .bases = ModelBases{basis_from_json(bases.at("trend")), basis_from_json(bases.at("group"))}};
  const auto rank = static_cast<Eigen::Index>(get_count(j, "rank", what));
  for (const Json& f : j.at("factors")) m.params.factors.push_back(matrix_from(f, "factor matrix", rank));
  for (const Json& q : j.at("subgroup")) m.params.subgroup.push_back(vector_from(q, "subgroup vector"));
  m.params.alpha = matrix_from(j.at("alpha"), "alpha", static_cast<Eigen::Index>(m.bases.trend.size()));
  m.params.beta = matrix_from(j.at("beta"), "beta", static_cast<Eigen::Index>(m.bases.group.size()));
  const auto dims = get<std::vector<std::size_t>>(j, "dims", what);
  m.params.validate(dims, m.scheme, m.bases);
  m.scheme.validate(dims);

  const Json& c = j.at("correlation");
  m.corr.structure = parse_correlation(get<std::string>(c, "structure", what));
  m.corr.rho = get<double>(c, "rho", what);
  m.corr.variance = get<double>(c, "variance", what);
  if (c.contains("lag")) m.corr.lag = parse_lag_scale(get<std::string>(c, "lag", what));
  m.lambda = get<double>(j, "lambda", what);
  if (j.contains("cold_variance"))
    m.cold_variance = parse_cold_variance(get<std::string>(j, "cold_variance", what));
  const Json& ts = j.at("time_scale");
  scale = TimeScale{get<double>(ts, "t_min", what), get<double>(ts, "t_max", what)};
  if (j.contains("sandwich")) {
    const Json& s = j.at("sandwich");
    SandwichCovariance sw;
    const auto dim = static_cast<Eigen::Index>(gamma_size(m.params));
    sw.cov_gamma = matrix_from(s.at("cov_gamma"), "cov_gamma", dim);
    if (sw.cov_gamma.rows() != dim) fail(ErrorKind::config, "cov_gamma has the wrong size");
    sw.sigma2_train = get<double>(s, "sigma2_train", what);
    sw.sigma2_subgroup = get<double>(s, "sigma2_subgroup", what);
    m.sandwich = std::move(sw);
  } else if (j.contains("sandwich_error")) {
    m.sandwich_error = get<std::string>(j, "sandwich_error", what);
  }
  const Json& r = j.at("report");
  m.report.iterations = get_count(r, "iterations", what);
  m.report.converged = get<bool>(r, "converged", what);
  m.report.final_lambda = get<double>(r, "final_lambda", what);
  for (const Json& v : r.at("objective_trace")) m.report.objective_trace.push_back(v.is_null() ? NAN : v.get<double>());
  m.report.accepted_blocks = get<std::vector<std::string>>(r, "accepted_blocks", what);
  return m;
}

}  // namespace dtrs
