#pragma once

#include <string>

#include <json.hpp>

#include "dtrs/evaluator.hpp"
#include "dtrs/ingest.hpp"
#include "dtrs/pipeline.hpp"
#include "dtrs/simulator.hpp"

namespace dtrs {

using Json = nlohmann::json;

// Sorted keys, two-space indent, floats at 12 significant digits. Non-finite
// numbers are written as null.
std::string canonical_json(const Json& value);
std::string format_number(double x);

Json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);
void write_json_file(const std::string& path, const Json& value);

// Configs reject unknown keys with a config error naming the key.
SimConfig sim_config_from_json(const Json& j);
Json to_json(const SimConfig& config);
FitConfig fit_config_from_json(const Json& j);
Json to_json(const FitConfig& config);

// Column roles plus optional dims, time range, time groups and full subgroup
// maps. Subgroup labels are 1-based in files.
CsvSchema schema_from_json(const Json& j);
Json to_json(const CsvSchema& schema);
CsvSchema simulation_schema(const SimData& data);

Json to_json(const SimTruth& truth);
Json to_json(const FitReport& report);
Json to_json(const TuneResult& tune);
Json to_json(const MetricReport& report);

Json to_json(const SplineBasis& basis);
SplineBasis basis_from_json(const Json& j);
Json to_json(const TimeGroups& groups);
TimeGroups time_groups_from_json(const Json& j);
Json to_json(const SubgroupScheme& scheme);
SubgroupScheme scheme_from_json(const Json& j);

// Model file: parameters, scheme, bases, working correlation, lambda, the
// sandwich covariance, the fit report and the time scale of the training data.
Json model_to_json(const FittedModel& model, const TimeScale& scale);
FittedModel model_from_json(const Json& j, TimeScale& scale);

}  // namespace dtrs
