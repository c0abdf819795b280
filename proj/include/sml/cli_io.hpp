#pragma once

// Run configuration (JSON), manifests and bit-stable CSV/JSON output.

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "sml/convergence_lab.hpp"
#include "sml/limit_pde.hpp"
#include "sml/spde_sim.hpp"

namespace sml {

/// Process exit codes of the command-line driver.
enum ExitCode : int {
  exit_success = 0,
  exit_config_error = 1,
  exit_numerical_failure = 2,
  exit_acceptance_failure = 3,
};

/// Environment variable that overrides output.directory.
inline constexpr const char* output_dir_env = "SMLAB_OUTPUT_DIR";

struct RunConfig {
  // grid
  double length = 1.0;
  int n = 127;
  // noise
  int modes = 16;
  double decay = 2.0;
  // physics
  double gamma = 1.0;
  std::vector<double> mus{0.2, 0.1, 0.05, 0.025};
  double alpha = 0.5;
  bool projection = true;
  // time
  double dt = 0.0;  // 0: automatic
  double horizon = 1.0;
  double dt_scale = 1e-3;
  // initial data
  std::vector<ModeTerm> initial{{1, 0, 1.0}, {2, 1, 0.5}, {3, 2, 0.3}};
  std::vector<ModeTerm> velocity{};
  double h2_cap = 1e4;
  // limit solver
  bool parabolic = false;
  double limit_dt = 0.0;  // 0: automatic
  double safety = 0.9;
  bool renormalize = false;
  // study
  int ensemble = 16;
  double delta = 1.0;
  std::uint64_t master_seed = 42;
  bool common_random_numbers = true;
  std::size_t outputs = 256;
  bool exploratory = false;
  unsigned threads = 0;
  double energy_gate = 5e-2;
  double trend_factor = 0.5;
  // output
  std::string directory = "smlab-out";
  std::size_t stride = 10;
  double weight_a = 10.0;
};

/// Parses and validates a configuration document. Missing keys take their
/// defaults; unknown keys, wrong types and out-of-range values throw
/// ConfigError naming the offending key. A manifest is accepted as well: its
/// embedded configuration is used.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path);

/// Fully resolved configuration; parse_config(to_json(c)) reproduces c.
nlohmann::json to_json(const RunConfig& config);

/// FNV-1a (64 bit) of the canonical serialization of the resolved configuration, as hex.
std::string config_hash(const RunConfig& config);

StudyConfig study_config(const RunConfig& config);
SpdeParams spde_params(const RunConfig& config);
LimitParams limit_params(const RunConfig& config);

/// output.directory unless the environment variable is set.
std::filesystem::path output_directory(const RunConfig& config);

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double x);

/// Strict parse of a full string as a double.
double parse_double(std::string_view text);

/// Minimal CSV writer: header once, then rows of doubles / integers.
class CsvWriter {
 public:
  CsvWriter(std::ostream& out, const std::vector<std::string>& header);
  void row(const std::vector<double>& values);
  /// Row of preformatted cells.
  void raw_row(const std::vector<std::string>& cells);

 private:
  std::ostream* out_;
  std::size_t columns_;
};

struct CheckOutcome {
  std::string name;
  bool passed = false;
};

struct RunManifest {
  std::string command;
  RunConfig config;
  std::vector<std::uint64_t> seeds;
  double wall_seconds = 0.0;
  std::vector<CheckOutcome> checks;
  std::vector<std::string> outputs;
};

nlohmann::json to_json(const RunManifest& manifest);

/// Version string of the library.
std::string code_version();

// Serialized products -------------------------------------------------------

std::vector<std::string> trajectory_columns();
std::vector<double> trajectory_row(const StepDiagnostics& d, const RemainderSample& r);

std::vector<std::string> limit_columns();
std::vector<double> limit_row(const LimitRow& r);

nlohmann::json to_json(const StudyResult& result);
std::vector<std::string> sample_columns();
std::vector<std::string> sample_cells(const SampleRecord& r);

// Command bodies ------------------------------------------------------------

struct SimulationSummary {
  std::uint64_t seed = 0;
  double dt = 0.0;
  std::size_t steps = 0;
  std::size_t rows = 0;
  /// max over emitted rows of |E(t) - E(0)| / E(0).
  double energy_residual = 0.0;
};

/// Runs one SPDE trajectory (single mass) and writes its diagnostics every
/// output.stride steps, first and last step always included. A blow-up
/// throws BlowUpError after the rows written so far.
SimulationSummary write_simulation(const RunConfig& config, std::ostream& csv);

struct LimitSummary {
  double dt = 0.0;
  std::size_t steps = 0;
  std::size_t rows = 0;
  double max_sphere_residual = 0.0;
  bool energy_inequality = true;
};

/// Solves the limit equation and writes about one row per output.stride steps.
LimitSummary write_limit(const RunConfig& config, std::ostream& csv);

/// Gates applied by `study --check`: failure budget, energy residual per
/// level, strictly decreasing mean error, and the last-to-first error ratio.
std::vector<CheckOutcome> study_checks(const RunConfig& config, const StudyResult& result);

}  // namespace sml
