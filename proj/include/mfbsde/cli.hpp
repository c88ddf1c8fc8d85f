#pragma once

#include "mfbsde/problem.hpp"

#include <json.hpp>

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfbsde::cli {

enum ExitCode : int {
  exit_ok = 0,
  exit_failure = 1,
  exit_schema = 2,
  exit_divergence = 3,
  exit_mismatch = 4,
};

/// A configuration that fails validation. Nothing has been computed or written.
class SchemaError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

struct OutputPaths {
  std::string report;
  std::string csv;
  std::string dump;
};

struct RunConfig {
  Problem problem;
  OutputPaths output;
  /// Reporting level for refine: number of grid levels (M, 2M, ...).
  int refine_levels = 3;
};

/// Parses and validates a configuration object; unknown keys throw SchemaError.
RunConfig parse_config(const nlohmann::json& config);
RunConfig load_config(const std::string& path);

/// The fully resolved configuration, sufficient to reproduce a run.
nlohmann::json echo_config(const RunConfig& config, const Fixture& fixture, const std::string& scheme);

/// Every constant the fixture's certificates determine on horizon T.
nlohmann::json constants_report(const Fixture& fixture, double T);

/// Per-node summary: t, mean|Y^i| for each i, max|Y|, BMO estimate from t.
std::string summary_csv(const ProblemRun& run);

/// Entry point shared by the executable and the tests; args exclude argv[0].
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace mfbsde::cli
