// smlab: command-line driver for the small-mass lab.
//
//   smlab simulate CONFIG      one SPDE trajectory -> trajectory.csv
//   smlab limit CONFIG         limit equation      -> limit.csv
//   smlab study CONFIG [--check]                   -> study.json, samples.csv
//   smlab check [--mutate-correction]              -> invariant report (JSON)
//
// Every run writes <command>.manifest.json next to its outputs; a manifest is
// accepted in place of a configuration file.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "sml/cli_io.hpp"
#include "sml/errors.hpp"
#include "sml/invariants.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

fs::path prepare(const sml::RunConfig& config) {
  const fs::path dir = sml::output_directory(config);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw sml::ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

std::ofstream open(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw sml::ConfigError("cannot write " + path.string());
  return out;
}

void write_manifest(const fs::path& dir, const sml::RunManifest& m) {
  auto out = open(dir / (m.command + ".manifest.json"));
  out << sml::to_json(m).dump(2) << '\n';
}

int cmd_simulate(const std::string& path) {
  const Stopwatch clock;
  const sml::RunConfig config = sml::load_config(path);
  const fs::path dir = prepare(config);
  sml::RunManifest m{"simulate", config, {}, 0.0, {}, {"trajectory.csv"}};
  sml::SimulationSummary s;
  {
    auto csv = open(dir / "trajectory.csv");
    s = sml::write_simulation(config, csv);
  }
  m.seeds = {s.seed};
  m.wall_seconds = clock.seconds();
  write_manifest(dir, m);
  std::cout << "simulate: " << s.steps << " steps of dt = " << sml::format_double(s.dt) << ", "
            << s.rows << " rows, max relative energy drift "
            << sml::format_double(s.energy_residual) << "\n";
  return sml::exit_success;
}

int cmd_limit(const std::string& path) {
  const Stopwatch clock;
  const sml::RunConfig config = sml::load_config(path);
  const fs::path dir = prepare(config);
  sml::RunManifest m{"limit", config, {}, 0.0, {}, {"limit.csv"}};
  sml::LimitSummary s;
  {
    auto csv = open(dir / "limit.csv");
    s = sml::write_limit(config, csv);
  }
  m.wall_seconds = clock.seconds();
  m.checks = {{"energy_inequality", s.energy_inequality}};
  write_manifest(dir, m);
  std::cout << "limit: " << s.steps << " steps of dt = " << sml::format_double(s.dt) << ", "
            << s.rows << " rows, max sphere residual "
            << sml::format_double(s.max_sphere_residual) << "\n";
  return sml::exit_success;
}

int cmd_study(const std::string& path, bool check) {
  const Stopwatch clock;
  const sml::RunConfig config = sml::load_config(path);
  const fs::path dir = prepare(config);
  const sml::StudyResult result = sml::scaling_experiment(sml::study_config(config));

  {
    auto out = open(dir / "study.json");
    out << sml::to_json(result).dump(2) << '\n';
  }
  {
    auto out = open(dir / "samples.csv");
    sml::CsvWriter csv(out, sml::sample_columns());
    for (const sml::SampleRecord& r : result.samples) csv.raw_row(sml::sample_cells(r));
  }

  sml::RunManifest m{"study", config, {}, 0.0, {}, {"study.json", "samples.csv"}};
  for (const sml::SampleRecord& r : result.samples) m.seeds.push_back(r.seed);
  const std::vector<sml::CheckOutcome> checks = sml::study_checks(config, result);
  if (check) m.checks = checks;
  m.wall_seconds = clock.seconds();
  write_manifest(dir, m);

  for (const sml::LevelSummary& l : result.levels) {
    std::cout << "mu = " << sml::format_double(l.mu) << "  dt = " << sml::format_double(l.dt)
              << "  mean error = " << sml::format_double(l.mean_error) << " +- "
              << sml::format_double(l.std_error) << "  failures = " << l.failures << "\n";
  }
  if (!result.ok) {
    std::cerr << "study: " << result.message << "\n";
    return sml::exit_numerical_failure;
  }
  if (!check) return sml::exit_success;
  bool all = true;
  for (const sml::CheckOutcome& c : checks) {
    std::cout << "check " << c.name << ": " << (c.passed ? "PASS" : "FAIL") << "\n";
    all = all && c.passed;
  }
  return all ? sml::exit_success : sml::exit_acceptance_failure;
}

int cmd_check(bool mutate, const std::string& report) {
  sml::InvariantOptions options;
  options.mutate_correction = mutate;
  const auto results = sml::run_invariants(options);
  json list = json::array();
  bool all = true;
  for (const sml::InvariantResult& r : results) {
    list.push_back({{"name", r.name},
                    {"module", r.module},
                    {"passed", r.passed},
                    {"value", r.value},
                    {"tolerance", r.tolerance},
                    {"detail", r.detail}});
    all = all && r.passed;
  }
  const json doc{{"passed", all},
                 {"mutate_correction", mutate},
                 {"code_version", sml::code_version()},
                 {"invariants", list}};
  if (report.empty()) {
    std::cout << doc.dump(2) << '\n';
  } else {
    auto out = open(report);
    out << doc.dump(2) << '\n';
    for (const sml::InvariantResult& r : results) {
      std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << "  " << r.detail << "\n";
    }
  }
  return all ? sml::exit_success : sml::exit_acceptance_failure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Small-mass limit lab for the stochastic damped wave equation on the sphere"};
  app.require_subcommand(1);
  std::string config_path;
  bool check = false;
  bool mutate = false;
  std::string report;

  auto* simulate = app.add_subcommand("simulate", "Run one SPDE trajectory");
  simulate->add_option("config", config_path, "JSON configuration or manifest")->required();
  auto* limit = app.add_subcommand("limit", "Solve the deterministic limit equation");
  limit->add_option("config", config_path, "JSON configuration or manifest")->required();
  auto* study = app.add_subcommand("study", "Run the small-mass convergence study");
  study->add_option("config", config_path, "JSON configuration or manifest")->required();
  study->add_flag("--check", check, "Apply the acceptance gates to the exit code");
  auto* inv = app.add_subcommand("check", "Run the invariant suite");
  inv->add_flag("--mutate-correction", mutate, "Flip the sign of the Ito correction (negative control)");
  inv->add_option("--report", report, "Write the JSON report to this file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? sml::exit_success : sml::exit_config_error;
  }

  try {
    if (*simulate) return cmd_simulate(config_path);
    if (*limit) return cmd_limit(config_path);
    if (*study) return cmd_study(config_path, check);
    return cmd_check(mutate, report);
  } catch (const sml::BlowUpError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return sml::exit_numerical_failure;
  } catch (const sml::Error& e) {
    // Configuration, range and hypothesis violations.
    std::cerr << "configuration error: " << e.what() << "\n";
    return sml::exit_config_error;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return sml::exit_numerical_failure;
  }
}
