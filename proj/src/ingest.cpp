#include "dtrs/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "dtrs/error.hpp"

namespace dtrs {
namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& text, double& out) {
  const std::string s = trim(text);
  if (s.empty()) return false;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

bool parse_positive_int(const std::string& text, std::size_t& out) {
  const std::string s = trim(text);
  if (s.empty()) return false;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  if (ec == std::errc() && ptr == end) return out >= 1;
  // Accept integral floats such as "3.0".
  double d;
  if (!parse_double(s, d) || d < 1.0 || d != std::floor(d)) return false;
  out = static_cast<std::size_t>(d);
  return true;
}

std::size_t column_of(const CsvTable& table, const std::string& name, const std::string& path) {
  auto it = std::find(table.header.begin(), table.header.end(), name);
  if (it == table.header.end())
    fail(ErrorKind::parse, path + ": missing column '" + name + "'");
  return static_cast<std::size_t>(it - table.header.begin());
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double TimeScale::rescale(double t) const noexcept {
  const double span = t_max - t_min;
  return span > 0.0 ? (t - t_min) / span : 0.0;
}

double TimeScale::original(double s) const noexcept { return t_min + s * (t_max - t_min); }

TimeGroups rescale(const TimeGroups& groups, const TimeScale& scale) {
  if (groups.kind() == TimeGroups::Kind::periodic) {
    const double span = scale.t_max - scale.t_min;
    const double unit = span > 0.0 ? span : 1.0;
    return TimeGroups::periodic(groups.period() / unit, scale.rescale(groups.origin()),
                                groups.count());
  }
  std::vector<double> cuts;
  cuts.reserve(groups.breakpoints().size());
  for (double b : groups.breakpoints()) cuts.push_back(scale.rescale(b));
  return TimeGroups::intervals(std::move(cuts), groups.labels());
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open '" + path + "'");
  CsvTable table;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0)
      line.erase(0, 3);
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (!have_header) {
      for (auto& f : fields) f = trim(f);
      table.header = std::move(fields);
      have_header = true;
      continue;
    }
    table.rows.push_back(std::move(fields));
    table.lines.push_back(lineno);
  }
  if (!have_header) fail(ErrorKind::parse, path + ": missing header row");
  return table;
}

CsvSchema default_schema(std::size_t order, bool with_groups) {
  CsvSchema s;
  for (std::size_t k = 0; k < order; ++k) {
    s.modes.push_back("i" + std::to_string(k + 1));
    if (with_groups) s.groups.push_back("g" + std::to_string(k + 1));
  }
  return s;
}

IngestResult ingest_long_csv(const std::string& path, const CsvSchema& schema,
                             const IngestOptions& options) {
  const std::size_t d = schema.modes.size();
  if (d == 0) fail(ErrorKind::config, "schema needs at least one mode column");
  if (!schema.groups.empty() && schema.groups.size() != d)
    fail(ErrorKind::config, "schema 'groups' must list one column per mode");

  const CsvTable table = read_csv(path);
  std::vector<std::size_t> mode_cols(d);
  for (std::size_t k = 0; k < d; ++k) mode_cols[k] = column_of(table, schema.modes[k], path);
  const std::size_t time_col = column_of(table, schema.time, path);
  const std::size_t value_col = column_of(table, schema.value, path);
  std::vector<std::optional<std::size_t>> group_cols(d);
  for (std::size_t k = 0; k < schema.groups.size(); ++k)
    if (!schema.groups[k].empty()) group_cols[k] = column_of(table, schema.groups[k], path);

  struct Raw {
    std::size_t line;
    IndexTuple index;
    double time;
    double value;
    std::vector<int> groups;
  };

  IngestResult result;
  result.rows = table.rows.size();
  auto reject = [&](std::size_t line, ErrorKind kind, const std::string& why) {
    if (!options.skip_invalid) fail(kind, path + ":" + std::to_string(line) + ": " + why);
    result.rejected.push_back({line, why});
  };

  std::vector<Raw> raws;
  raws.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::size_t line = table.lines[r];
    if (row.size() != table.header.size()) {
      reject(line, ErrorKind::parse,
             "expected " + std::to_string(table.header.size()) + " fields, got " +
                 std::to_string(row.size()));
      continue;
    }
    Raw raw{line, IndexTuple(d), 0.0, 0.0, std::vector<int>(d, kUnassignedGroup)};
    bool ok = true;
    for (std::size_t k = 0; k < d && ok; ++k) {
      std::size_t idx;
      if (!parse_positive_int(row[mode_cols[k]], idx)) {
        reject(line, ErrorKind::parse, "bad index in column '" + schema.modes[k] + "'");
        ok = false;
        break;
      }
      raw.index[k] = static_cast<Index>(idx - 1);
      if (group_cols[k]) {
        std::size_t g;
        if (!parse_positive_int(row[*group_cols[k]], g)) {
          reject(line, ErrorKind::parse, "bad subgroup in column '" + schema.groups[k] + "'");
          ok = false;
          break;
        }
        raw.groups[k] = static_cast<int>(g - 1);
      }
    }
    if (!ok) continue;
    if (!parse_double(row[time_col], raw.time)) {
      reject(line, ErrorKind::parse, "bad time value");
      continue;
    }
    if (!parse_double(row[value_col], raw.value)) {
      reject(line, ErrorKind::parse, "bad observation value");
      continue;
    }
    raws.push_back(std::move(raw));
  }

  TimeScale scale;
  if (schema.time_range) {
    scale = *schema.time_range;
  } else if (!raws.empty()) {
    scale.t_min = std::numeric_limits<double>::infinity();
    scale.t_max = -std::numeric_limits<double>::infinity();
    for (const Raw& raw : raws) {
      scale.t_min = std::min(scale.t_min, raw.time);
      scale.t_max = std::max(scale.t_max, raw.time);
    }
  }
  result.scale = scale;

  std::vector<std::size_t> dims(d, 0);
  for (const Raw& raw : raws)
    for (std::size_t k = 0; k < d; ++k) dims[k] = std::max<std::size_t>(dims[k], raw.index[k] + 1);
  if (schema.dims) {
    if (schema.dims->size() != d) fail(ErrorKind::config, "schema 'dims' has the wrong length");
    dims = *schema.dims;
  }

  TemporalTensorBuilder builder(dims);
  std::vector<std::vector<int>> groups(d);
  for (std::size_t k = 0; k < d; ++k) groups[k].assign(dims[k], kUnassignedGroup);

  for (const Raw& raw : raws) {
    bool in_range = true;
    for (std::size_t k = 0; k < d; ++k)
      if (raw.index[k] >= dims[k]) in_range = false;
    if (!in_range) {
      reject(raw.line, ErrorKind::bounds, "index beyond declared dims");
      continue;
    }
    const double t = scale.rescale(raw.time);
    // Absorb the last-ulp error of the affine map at the range ends.
    const double s = (t < 0.0 && t > -1e-12) ? 0.0 : (t > 1.0 && t < 1.0 + 1e-12) ? 1.0 : t;
    if (!(s >= 0.0 && s <= 1.0)) {
      reject(raw.line, ErrorKind::bounds, "time " + fmt_double(raw.time) + " outside range");
      continue;
    }
    bool group_conflict = false;
    for (std::size_t k = 0; k < d; ++k) {
      const int g = raw.groups[k];
      if (g == kUnassignedGroup) continue;
      int& slot = groups[k][raw.index[k]];
      if (slot != kUnassignedGroup && slot != g) group_conflict = true;
    }
    if (group_conflict) {
      reject(raw.line, ErrorKind::conflict, "subject assigned to two subgroups");
      continue;
    }
    try {
      builder.add(raw.index, s, raw.value);
    } catch (const Error& e) {
      reject(raw.line, e.kind(), e.what());
      continue;
    }
    for (std::size_t k = 0; k < d; ++k)
      if (raw.groups[k] != kUnassignedGroup) groups[k][raw.index[k]] = raw.groups[k];
  }

  SubgroupScheme scheme;
  scheme.mode_groups = schema.mode_groups ? *schema.mode_groups : groups;
  for (std::size_t k = 0; k < d; ++k) {
    auto& gk = scheme.mode_groups[k];
    const bool has_column = group_cols[k].has_value() || schema.mode_groups.has_value();
    if (!has_column) std::fill(gk.begin(), gk.end(), 0);
    int count = 1;
    for (int g : gk) count = std::max(count, g + 1);
    scheme.group_counts.push_back(count);
  }
  if (schema.time_groups) scheme.time_groups = rescale(*schema.time_groups, scale);
  scheme.validate(dims);

  result.scheme = std::move(scheme);
  result.tensor = std::move(builder).build();
  return result;
}

void export_long_csv(const std::string& path, const TemporalTensor& tensor,
                     const SubgroupScheme& scheme, const TimeScale& scale,
                     const CsvSchema& schema) {
  const std::size_t d = tensor.order();
  if (schema.modes.size() != d) fail(ErrorKind::config, "schema order does not match tensor");
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write '" + path + "'");
  const bool with_groups = schema.groups.size() == d;
  for (std::size_t k = 0; k < d; ++k) out << schema.modes[k] << ",";
  out << schema.time << "," << schema.value;
  if (with_groups)
    for (std::size_t k = 0; k < d; ++k)
      if (!schema.groups[k].empty()) out << "," << schema.groups[k];
  out << "\n";
  for (const Cell& c : tensor.cells()) {
    std::string prefix;
    for (std::size_t k = 0; k < d; ++k) prefix += std::to_string(c.index[k] + 1) + ",";
    std::string suffix;
    if (with_groups)
      for (std::size_t k = 0; k < d; ++k)
        if (!schema.groups[k].empty())
          suffix += "," + std::to_string(scheme.mode_groups[k][c.index[k]] + 1);
    for (const TimeValue& tv : c.series)
      out << prefix << fmt_double(scale.original(tv.time)) << "," << fmt_double(tv.value)
          << suffix << "\n";
  }
  if (!out) fail(ErrorKind::io, "failed writing '" + path + "'");
}

std::vector<Query> read_queries(const std::string& path, const CsvSchema& schema,
                                const TimeScale& scale) {
  const CsvTable table = read_csv(path);
  const std::size_t d = schema.modes.size();
  std::vector<std::size_t> mode_cols(d);
  for (std::size_t k = 0; k < d; ++k) mode_cols[k] = column_of(table, schema.modes[k], path);
  const std::size_t time_col = column_of(table, schema.time, path);
  std::optional<std::size_t> value_col;
  if (auto it = std::find(table.header.begin(), table.header.end(), schema.value);
      it != table.header.end())
    value_col = static_cast<std::size_t>(it - table.header.begin());

  std::vector<Query> queries;
  queries.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string where = path + ":" + std::to_string(table.lines[r]) + ": ";
    if (row.size() != table.header.size()) fail(ErrorKind::parse, where + "wrong field count");
    Query q{IndexTuple(d), 0.0, std::nullopt};
    for (std::size_t k = 0; k < d; ++k) {
      std::size_t idx;
      if (!parse_positive_int(row[mode_cols[k]], idx)) fail(ErrorKind::parse, where + "bad index");
      q.indices[k] = static_cast<Index>(idx - 1);
    }
    double t;
    if (!parse_double(row[time_col], t)) fail(ErrorKind::parse, where + "bad time value");
    q.time = scale.rescale(t);
    if (q.time < 0.0 && q.time > -1e-12) q.time = 0.0;
    if (q.time > 1.0 && q.time < 1.0 + 1e-12) q.time = 1.0;
    if (!(q.time >= 0.0 && q.time <= 1.0))
      fail(ErrorKind::bounds, where + "time " + fmt_double(t) + " outside the model's range");
    if (value_col) {
      double v;
      if (parse_double(row[*value_col], v)) q.value = v;
    }
    queries.push_back(std::move(q));
  }
  return queries;
}

}  // namespace dtrs
