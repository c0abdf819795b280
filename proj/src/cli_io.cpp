#include "sml/cli_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#ifndef SML_VERSION
#define SML_VERSION "0.0.0"
#endif

namespace sml {

using nlohmann::json;

namespace {

/// Reads the keys of one JSON object and rejects everything it was not asked for.
class Section {
 public:
  Section(const json& doc, std::string path) : path_(std::move(path)) {
    if (!doc.is_object()) throw ConfigError(path_ + ": expected an object");
    doc_ = &doc;
  }

  const json* find(const char* key) {
    seen_.insert(key);
    const auto it = doc_->find(key);
    return it == doc_->end() ? nullptr : &*it;
  }

  void number(const char* key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) fail(key, "expected a number");
      out = v->get<double>();
      if (!std::isfinite(out)) fail(key, "must be finite");
    }
  }

  template <typename Int>
  void integer(const char* key, Int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) fail(key, "expected an integer");
      if constexpr (std::is_unsigned_v<Int>) {
        if (v->is_number_unsigned()) {
          out = v->get<Int>();
        } else {
          fail(key, "must be non-negative");
        }
      } else {
        const auto x = v->get<long long>();
        if (x < std::numeric_limits<Int>::min() || x > std::numeric_limits<Int>::max()) {
          fail(key, "out of range");
        }
        out = static_cast<Int>(x);
      }
    }
  }

  void boolean(const char* key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) fail(key, "expected true or false");
      out = v->get<bool>();
    }
  }

  void string(const char* key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) fail(key, "expected a string");
      out = v->get<std::string>();
    }
  }

  /// A number or the string "auto" (stored as 0).
  void number_or_auto(const char* key, double& out) {
    if (const json* v = find(key)) {
      if (v->is_string() && v->get<std::string>() == "auto") {
        out = 0.0;
      } else if (v->is_number()) {
        out = v->get<double>();
        if (!(out > 0.0) || !std::isfinite(out)) fail(key, "must be positive or \"auto\"");
      } else {
        fail(key, "expected a number or \"auto\"");
      }
    }
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError(path_ + "." + key + ": " + what);
  }

  void finish() const {
    for (auto it = doc_->begin(); it != doc_->end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown key " + path_ + "." + it.key());
    }
  }

  const std::string& path() const { return path_; }

 private:
  const json* doc_ = nullptr;
  std::string path_;
  std::set<std::string> seen_;
};

std::vector<ModeTerm> parse_modes(const json& list, const std::string& path) {
  if (!list.is_array()) throw ConfigError(path + ": expected an array of modes");
  std::vector<ModeTerm> out;
  for (std::size_t i = 0; i < list.size(); ++i) {
    Section s(list[i], path + "[" + std::to_string(i) + "]");
    ModeTerm m;
    int component = 1;
    if (!list[i].contains("k")) s.fail("k", "missing");
    if (!list[i].contains("coefficient")) s.fail("coefficient", "missing");
    s.integer("k", m.k);
    s.integer("component", component);
    s.number("coefficient", m.coefficient);
    s.finish();
    if (component < 1 || component > 3) s.fail("component", "must be 1, 2 or 3");
    m.component = component - 1;
    out.push_back(m);
  }
  return out;
}

json modes_to_json(const std::vector<ModeTerm>& modes) {
  json list = json::array();
  for (const ModeTerm& m : modes) {
    list.push_back({{"k", m.k}, {"component", m.component + 1}, {"coefficient", m.coefficient}});
  }
  return list;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

void check_ranges(const RunConfig& c) {
  require(c.length > 0.0, "grid.L must be positive");
  require(c.n >= 2, "grid.n must be at least 2");
  require(c.modes >= 0, "noise.m must be non-negative");
  require(c.modes <= c.n, "noise.m must not exceed grid.n");
  require(c.decay >= 2.0, "noise.p must be at least 2");
  require(c.gamma > 0.0, "physics.gamma must be positive");
  require(!c.mus.empty(), "physics.mu must not be empty");
  for (std::size_t i = 0; i < c.mus.size(); ++i) {
    require(c.mus[i] > 0.0 && c.mus[i] <= 1.0, "physics.mu values must lie in (0, 1]");
    require(i == 0 || c.mus[i] < c.mus[i - 1], "physics.mu must be strictly decreasing");
  }
  require(c.alpha >= 0.5 || c.exploratory,
          "physics.alpha < 0.5 requires study.exploratory = true");
  require(c.horizon > 0.0, "time.T must be positive");
  require(c.dt_scale > 0.0, "time.dt_scale must be positive");
  require(!c.initial.empty(), "initial_data.modes must not be empty");
  for (const auto* list : {&c.initial, &c.velocity}) {
    for (const ModeTerm& m : *list) {
      require(m.k >= 1 && m.k <= c.n, "initial_data mode k must lie in 1..grid.n");
    }
  }
  require(c.h2_cap > 0.0, "initial_data.h2_cap must be positive");
  require(c.safety > 0.0 && c.safety <= 1.0, "limit.safety must lie in (0, 1]");
  require(c.ensemble >= 1, "study.ensemble must be at least 1");
  require(c.delta >= 0.0 && c.delta < 2.0, "study.delta must lie in [0, 2)");
  require(c.outputs >= 1, "study.outputs must be at least 1");
  require(c.energy_gate > 0.0, "study.energy_gate must be positive");
  require(c.trend_factor > 0.0, "study.trend_factor must be positive");
  require(c.stride >= 1, "output.stride must be at least 1");
  require(c.weight_a >= 0.0, "output.weight_a must be non-negative");
}

}  // namespace

RunConfig parse_config(const json& doc_in) {
  const json* doc = &doc_in;
  if (doc->is_object() && doc->contains("manifest_version")) {
    if (!doc->contains("config")) throw ConfigError("manifest without an embedded config");
    doc = &(*doc)["config"];
  }
  RunConfig c;
  Section root(*doc, "config");
  if (const json* g = root.find("grid")) {
    Section s(*g, "grid");
    s.number("L", c.length);
    s.integer("n", c.n);
    s.finish();
  }
  if (const json* g = root.find("noise")) {
    Section s(*g, "noise");
    s.integer("m", c.modes);
    s.number("p", c.decay);
    s.finish();
  }
  if (const json* g = root.find("physics")) {
    Section s(*g, "physics");
    s.number("gamma", c.gamma);
    if (const json* mu = s.find("mu")) {
      c.mus.clear();
      if (mu->is_number()) {
        c.mus.push_back(mu->get<double>());
      } else if (mu->is_array()) {
        for (const json& x : *mu) {
          if (!x.is_number()) s.fail("mu", "expected numbers");
          c.mus.push_back(x.get<double>());
        }
      } else {
        s.fail("mu", "expected a number or an array of numbers");
      }
    }
    s.number("alpha", c.alpha);
    s.boolean("projection", c.projection);
    s.finish();
  }
  if (const json* g = root.find("time")) {
    Section s(*g, "time");
    s.number_or_auto("dt", c.dt);
    s.number("T", c.horizon);
    s.number("dt_scale", c.dt_scale);
    s.finish();
  }
  if (const json* g = root.find("initial_data")) {
    Section s(*g, "initial_data");
    if (const json* m = s.find("modes")) c.initial = parse_modes(*m, "initial_data.modes");
    if (const json* m = s.find("velocity")) c.velocity = parse_modes(*m, "initial_data.velocity");
    s.number("h2_cap", c.h2_cap);
    s.finish();
  }
  if (const json* g = root.find("limit")) {
    Section s(*g, "limit");
    s.boolean("parabolic", c.parabolic);
    s.number_or_auto("dt", c.limit_dt);
    s.number("safety", c.safety);
    s.boolean("renormalize", c.renormalize);
    s.finish();
  }
  if (const json* g = root.find("study")) {
    Section s(*g, "study");
    s.integer("ensemble", c.ensemble);
    s.number("delta", c.delta);
    s.integer("master_seed", c.master_seed);
    s.boolean("common_random_numbers", c.common_random_numbers);
    s.integer("outputs", c.outputs);
    s.boolean("exploratory", c.exploratory);
    s.integer("threads", c.threads);
    s.number("energy_gate", c.energy_gate);
    s.number("trend_factor", c.trend_factor);
    s.finish();
  }
  if (const json* g = root.find("output")) {
    Section s(*g, "output");
    s.string("directory", c.directory);
    s.integer("stride", c.stride);
    s.number("weight_a", c.weight_a);
    s.finish();
  }
  root.finish();
  check_ranges(c);
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open configuration file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
  }
  return parse_config(doc);
}

json to_json(const RunConfig& c) {
  auto dt_value = [](double dt) { return dt > 0.0 ? json(dt) : json("auto"); };
  return {
      {"grid", {{"L", c.length}, {"n", c.n}}},
      {"noise", {{"m", c.modes}, {"p", c.decay}}},
      {"physics",
       {{"gamma", c.gamma}, {"mu", c.mus}, {"alpha", c.alpha}, {"projection", c.projection}}},
      {"time", {{"dt", dt_value(c.dt)}, {"T", c.horizon}, {"dt_scale", c.dt_scale}}},
      {"initial_data",
       {{"modes", modes_to_json(c.initial)},
        {"velocity", modes_to_json(c.velocity)},
        {"h2_cap", c.h2_cap}}},
      {"limit",
       {{"parabolic", c.parabolic},
        {"dt", dt_value(c.limit_dt)},
        {"safety", c.safety},
        {"renormalize", c.renormalize}}},
      {"study",
       {{"ensemble", c.ensemble},
        {"delta", c.delta},
        {"master_seed", c.master_seed},
        {"common_random_numbers", c.common_random_numbers},
        {"outputs", c.outputs},
        {"exploratory", c.exploratory},
        {"threads", c.threads},
        {"energy_gate", c.energy_gate},
        {"trend_factor", c.trend_factor}}},
      {"output", {{"directory", c.directory}, {"stride", c.stride}, {"weight_a", c.weight_a}}},
  };
}

std::string config_hash(const RunConfig& config) {
  json canonical = to_json(config);
  // Where results go and how many threads compute them does not change them.
  canonical["output"].erase("directory");
  canonical["study"].erase("threads");
  const std::string text = canonical.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

StudyConfig study_config(const RunConfig& c) {
  StudyConfig s;
  s.length = c.length;
  s.n = c.n;
  s.gamma = c.gamma;
  s.modes = c.modes;
  s.decay = c.decay;
  s.horizon = c.horizon;
  s.mus = c.mus;
  s.alpha = c.alpha;
  s.ensemble = c.ensemble;
  s.delta = c.delta;
  s.master_seed = c.master_seed;
  s.initial = c.initial;
  s.initial_velocity = c.velocity;
  s.dt = c.dt;
  s.dt_scale = c.dt_scale;
  s.projection = c.projection;
  s.common_random_numbers = c.common_random_numbers;
  s.outputs = c.outputs;
  s.h2_cap = c.h2_cap;
  s.exploratory = c.exploratory;
  s.threads = c.threads;
  return s;
}

SpdeParams spde_params(const RunConfig& c) {
  if (c.mus.size() != 1) throw ConfigError("physics.mu must be a single value for this command");
  SpdeParams p;
  p.mu = c.mus.front();
  p.gamma = c.gamma;
  p.alpha = c.alpha;
  p.horizon = c.horizon;
  p.projection = c.projection;
  const StudyConfig s = study_config(c);
  p.stream = sample_stream(s, 0, 0);
  p.dt = c.dt > 0.0 ? c.dt : plan_steps(s).dts.front();
  return p;
}

LimitParams limit_params(const RunConfig& c) {
  LimitParams p;
  p.gamma = c.gamma;
  p.dt = c.limit_dt;
  p.horizon = c.horizon;
  p.parabolic = c.parabolic;
  p.safety = c.safety;
  p.renormalize = c.renormalize;
  return p;
}

std::filesystem::path output_directory(const RunConfig& config) {
  if (const char* env = std::getenv(output_dir_env); env && *env) return env;
  return config.directory;
}

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc()) throw Error("format_double: conversion failed");
  return std::string(buf, end);
}

double parse_double(std::string_view text) {
  if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (text == "inf") return std::numeric_limits<double>::infinity();
  if (text == "-inf") return -std::numeric_limits<double>::infinity();
  double x = 0.0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), x);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw Error("parse_double: not a number: '" + std::string(text) + "'");
  }
  return x;
}

CsvWriter::CsvWriter(std::ostream& out, const std::vector<std::string>& header)
    : out_(&out), columns_(header.size()) {
  raw_row(header);
}

void CsvWriter::row(const std::vector<double>& values) {
  std::vector<std::string> cells;
  cells.reserve(values.size());
  for (double v : values) cells.push_back(format_double(v));
  raw_row(cells);
}

void CsvWriter::raw_row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_) throw ShapeError("CsvWriter: row width does not match header");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) *out_ << ',';
    *out_ << cells[i];
  }
  *out_ << '\n';
}

std::string code_version() { return SML_VERSION; }

json to_json(const RunManifest& m) {
  json checks = json::array();
  for (const CheckOutcome& c : m.checks) checks.push_back({{"name", c.name}, {"passed", c.passed}});
  return {{"manifest_version", 1},
          {"command", m.command},
          {"config", to_json(m.config)},
          {"config_hash", config_hash(m.config)},
          {"code_version", code_version()},
          {"seeds", m.seeds},
          {"wall_seconds", m.wall_seconds},
          {"checks", checks},
          {"outputs", m.outputs}};
}

std::vector<std::string> trajectory_columns() {
  return {"t",     "energy", "theta",       "eta", "u_h1", "u_h2", "v_h", "v_h1",
          "weighted_h2", "j1", "j2", "j3", "j4", "j5", "j6"};
}

std::vector<double> trajectory_row(const StepDiagnostics& d, const RemainderSample& r) {
  return {d.t,    d.energy, d.theta, d.eta,  d.u_h1, d.u_h2, d.v_h, d.v_h1,
          d.weighted_h2, r.j[0], r.j[1], r.j[2], r.j[3], r.j[4], r.j[5]};
}

std::vector<std::string> limit_columns() {
  return {"t", "u_h1", "u_h2", "ut_h", "sphere_residual", "energy_lhs", "energy_rhs"};
}

std::vector<double> limit_row(const LimitRow& r) {
  return {r.t, r.u_h1, r.u_h2, r.ut_h, r.sphere_residual, r.energy_lhs, r.energy_rhs};
}

json to_json(const StudyResult& result) {
  json levels = json::array();
  std::vector<double> mu, dt, mean, sd, mean_alt, sd_alt, energy_mean, energy_max, remainder,
      identity;
  std::vector<std::size_t> failures;
  for (const LevelSummary& l : result.levels) {
    levels.push_back({{"mu", l.mu},
                      {"dt", l.dt},
                      {"samples", l.samples},
                      {"failures", l.failures},
                      {"mean_error", l.mean_error},
                      {"std_error", l.std_error},
                      {"mean_error_alternate", l.mean_error_alternate},
                      {"std_error_alternate", l.std_error_alternate},
                      {"mean_energy_residual", l.mean_energy_residual},
                      {"max_energy_residual", l.max_energy_residual},
                      {"remainder_max", l.remainder_max},
                      {"mean_j_sup", l.mean_j_sup},
                      {"mean_identity_residual", l.mean_identity_residual}});
    mu.push_back(l.mu);
    dt.push_back(l.dt);
    mean.push_back(l.mean_error);
    sd.push_back(l.std_error);
    mean_alt.push_back(l.mean_error_alternate);
    sd_alt.push_back(l.std_error_alternate);
    energy_mean.push_back(l.mean_energy_residual);
    energy_max.push_back(l.max_energy_residual);
    remainder.push_back(l.remainder_max);
    identity.push_back(l.mean_identity_residual);
    failures.push_back(l.failures);
  }
  std::vector<std::uint64_t> seeds;
  for (const SampleRecord& s : result.samples) seeds.push_back(s.seed);
  return {{"target", result.target == LimitTarget::parabolic ? "parabolic" : "corrected"},
          {"alternate_target",
           result.target == LimitTarget::parabolic ? "corrected" : "parabolic"},
          {"exploratory", result.exploratory},
          {"ok", result.ok},
          {"message", result.message},
          {"alpha", result.config.alpha},
          {"delta", result.config.delta},
          {"ensemble", result.config.ensemble},
          {"master_seed", result.config.master_seed},
          {"fine_dt", result.plan.fine_dt},
          {"limit_dt", result.limit_dt},
          {"mu", mu},
          {"dt", dt},
          {"mean_error", mean},
          {"std_error", sd},
          {"mean_error_alternate", mean_alt},
          {"std_error_alternate", sd_alt},
          {"mean_energy_residual", energy_mean},
          {"max_energy_residual", energy_max},
          {"remainder_max", remainder},
          {"mean_identity_residual", identity},
          {"failures", failures},
          {"seeds", seeds},
          {"levels", levels}};
}

std::vector<std::string> sample_columns() {
  return {"mu_index", "sample", "mu", "seed", "failed", "failure_step", "error",
          "error_alternate", "energy_residual", "theta_max", "eta_max", "j1", "j2", "j3", "j4",
          "j5", "j6", "identity_residual"};
}

std::vector<std::string> sample_cells(const SampleRecord& r) {
  std::vector<std::string> cells{std::to_string(r.mu_index), std::to_string(r.sample),
                                 format_double(r.mu),        std::to_string(r.seed),
                                 r.failed ? "1" : "0",       std::to_string(r.failure_step)};
  for (double v : {r.error, r.error_alternate, r.energy_residual, r.theta_max, r.eta_max}) {
    cells.push_back(format_double(v));
  }
  for (double v : r.j_sup) cells.push_back(format_double(v));
  cells.push_back(format_double(r.identity_residual));
  return cells;
}

SimulationSummary write_simulation(const RunConfig& config, std::ostream& csv) {
  const Grid1D grid(config.length, config.n);
  const NoiseBasis basis(config.modes, config.decay, grid);
  const SpdeParams params = spde_params(config);
  const SpdeStepper stepper(grid, basis, params);

  const Field3 u0 = repair_initial_datum(grid, field_from_modes(grid, config.initial), config.h2_cap);
  Field3 v0 = Field3::Zero(grid.n(), 3);
  if (!config.velocity.empty()) v0 = project_tangent(grid, u0, field_from_modes(grid, config.velocity));
  State state = initial_state(grid, u0, v0);

  SimulationSummary summary;
  summary.seed = params.stream.id;
  summary.dt = params.dt;
  summary.steps = stepper.step_count();

  CsvWriter writer(csv, trajectory_columns());
  RemainderTracker tracker(grid, basis, params, state);
  const IncrementSource increments = stream_increments(stepper);
  double e0 = 0.0;
  auto emit = [&](const State& s) {
    const StepDiagnostics d = diagnose(grid, s, params, config.weight_a);
    if (!all_finite(d)) throw BlowUpError(s.steps, "non-finite diagnostics");
    if (s.steps == 0) e0 = d.energy;
    summary.energy_residual = std::max(summary.energy_residual, std::abs(d.energy - e0) / e0);
    writer.row(trajectory_row(d, tracker.sample(s)));
    ++summary.rows;
  };
  emit(state);
  for (std::size_t k = 0; k < summary.steps; ++k) {
    State next = stepper.step(state, increments(k));
    tracker.observe(state, next);
    state = std::move(next);
    if (state.steps % config.stride == 0 || k + 1 == summary.steps) emit(state);
  }
  return summary;
}

LimitSummary write_limit(const RunConfig& config, std::ostream& csv) {
  const Grid1D grid(config.length, config.n);
  const NoiseBasis basis(config.modes, config.decay, grid);
  const LimitParams params = limit_params(config);
  const Field3 u0 = repair_initial_datum(grid, field_from_modes(grid, config.initial), config.h2_cap);

  const LimitSolver<double> solver(grid, basis, params);
  const std::size_t steps = solver.schedule(1).second;
  const std::size_t segments = std::max<std::size_t>(1, (steps + config.stride - 1) / config.stride);
  const LimitTrajectory trajectory = solve_limit(grid, u0, params, basis, segments);

  LimitSummary summary;
  summary.dt = trajectory.dt;
  summary.steps = trajectory.steps;
  CsvWriter writer(csv, limit_columns());
  for (const LimitRow& r : limit_rows(grid, trajectory, params.gamma)) {
    for (double v : limit_row(r)) {
      if (!std::isfinite(v)) throw BlowUpError(summary.rows, "non-finite limit diagnostics");
    }
    writer.row(limit_row(r));
    ++summary.rows;
    summary.max_sphere_residual = std::max(summary.max_sphere_residual, r.sphere_residual);
    if (!(r.energy_lhs <= r.energy_rhs * (1.0 + 1e-6))) summary.energy_inequality = false;
  }
  return summary;
}

std::vector<CheckOutcome> study_checks(const RunConfig& config, const StudyResult& result) {
  std::vector<CheckOutcome> out;
  out.push_back({"failure_budget", result.ok});
  bool energy = true;
  for (const LevelSummary& l : result.levels) {
    if (!(l.max_energy_residual <= config.energy_gate)) energy = false;
  }
  out.push_back({"energy_residual_gate", energy});
  bool decreasing = true;
  for (std::size_t i = 1; i < result.levels.size(); ++i) {
    if (!(result.levels[i].mean_error < result.levels[i - 1].mean_error)) decreasing = false;
  }
  out.push_back({"mean_error_strictly_decreasing", decreasing});
  const bool ratio = !result.levels.empty() &&
                     result.levels.back().mean_error <=
                         config.trend_factor * result.levels.front().mean_error;
  out.push_back({"mean_error_ratio", ratio});
  return out;
}

}  // namespace sml
