#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "dtrs/temporal_tensor.hpp"

namespace dtrs {

// Affine map from original timestamps onto [0, 1].
struct TimeScale {
  double t_min = 0.0;
  double t_max = 1.0;

  double rescale(double t) const noexcept;
  double original(double s) const noexcept;
};

// Re-expresses a grouping given in original time units on the [0, 1] scale.
TimeGroups rescale(const TimeGroups& groups, const TimeScale& scale);

// Column roles of a long-format CSV. Optional members override what would be
// inferred from the data.
struct CsvSchema {
  std::vector<std::string> modes;
  std::string time = "time";
  std::string value = "value";
  // Empty, or one entry per mode; an empty entry means no group column.
  std::vector<std::string> groups;

  std::optional<std::vector<std::size_t>> dims;
  std::optional<TimeScale> time_range;
  // In original time units.
  std::optional<TimeGroups> time_groups;
  // Full 0-based subject -> subgroup maps; take precedence over group columns.
  std::optional<std::vector<std::vector<int>>> mode_groups;
};

struct RejectedRow {
  std::size_t line;
  std::string reason;
};

struct IngestOptions {
  // Record invalid rows in `rejected` instead of throwing.
  bool skip_invalid = false;
};

struct IngestResult {
  TemporalTensor tensor;
  SubgroupScheme scheme;
  TimeScale scale;
  std::size_t rows = 0;
  std::vector<RejectedRow> rejected;
};

IngestResult ingest_long_csv(const std::string& path, const CsvSchema& schema,
                             const IngestOptions& options = {});

// Writes one row per observation with times in original units. Group columns
// are written when the schema names them.
void export_long_csv(const std::string& path, const TemporalTensor& tensor,
                     const SubgroupScheme& scheme, const TimeScale& scale,
                     const CsvSchema& schema);

// Default column names i1..id, time, value, g1..gd.
CsvSchema default_schema(std::size_t order, bool with_groups);

struct Query {
  IndexTuple indices;  // 0-based
  double time;         // rescaled
  std::optional<double> value;
};

// Rows of (indices..., time[, value]) named by `schema`; times are mapped
// with `scale` and must land in [0, 1].
std::vector<Query> read_queries(const std::string& path, const CsvSchema& schema,
                                const TimeScale& scale);

// Minimal CSV reader: header row plus data rows, double-quoted fields allowed.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> lines;  // 1-based source line per row
};

CsvTable read_csv(const std::string& path);

}  // namespace dtrs
