#include "sml/convergence_lab.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <set>
#include <string>
#include <thread>
#include <tuple>

namespace sml {

Field3 field_from_modes(const Grid1D& grid, const std::vector<ModeTerm>& modes) {
  Field3 f = Field3::Zero(grid.n(), 3);
  for (const ModeTerm& m : modes) {
    if (m.k < 1 || m.k > grid.n()) {
      throw ParameterError("mode index " + std::to_string(m.k) + " outside 1.." +
                           std::to_string(grid.n()));
    }
    f += sine_mode(grid, m.k, m.component, m.coefficient);
  }
  return f;
}

// Remainder ------------------------------------------------------------------

RemainderTracker::RemainderTracker(const Grid1D& grid, const NoiseBasis& basis,
                                   const SpdeParams& params, const State& initial)
    : grid_(grid), mu_(params.mu), gamma_(params.gamma) {
  if (initial.acc_noise.rows() != grid.n()) {
    throw ConfigError("remainder tracking needs the noise accumulator of the state");
  }
  const double c = basis.modes() > 0 ? params.correction_coefficient() : 0.0;
  phi_eff_ = c * basis.phi();
  momentum0_ = momentum(initial);
  const Eigen::VectorXd uv = dot_rows(initial.u, initial.v);
  constant_ = initial.u.array().colwise() *
              (1.5 * mu_ / gamma_ * phi_eff_.array() * uv.array());
  last_ = integrands(initial);
  const Field3 zero = Field3::Zero(grid.n(), 3);
  sums_ = {zero, zero, zero, zero, zero, zero, zero, zero};
}

Field3 RemainderTracker::momentum(const State& s) const {
  const Eigen::VectorXd uu = s.u.rowwise().squaredNorm();
  Field3 m = gamma_ * s.u + mu_ * s.v;
  m.array() += s.u.array().colwise() * (0.5 * phi_eff_.array() * uu.array());
  return m;
}

RemainderTracker::Integrands RemainderTracker::integrands(const State& s) const {
  const Field3& u = s.u;
  const Field3& v = s.v;
  const double lambda = h1_seminorm_sq(grid_, u);
  const double v2 = inner_l2(grid_, v, v);
  const Eigen::ArrayXd uu = u.rowwise().squaredNorm().array();
  const Eigen::ArrayXd vv = v.rowwise().squaredNorm().array();
  const Eigen::ArrayXd uv = dot_rows(u, v).array();
  Integrands out;
  out.lap = laplacian(grid_, u);
  const Eigen::ArrayXd lu = dot_rows(out.lap, u).array();
  out.force = lambda * u;
  out.lap_dot = u.array().colwise() * lu;
  out.force_sq = u.array().colwise() * (lambda * uu);
  out.j2 = v2 * u;
  out.j3 = v.array().colwise() * uv;
  out.j4 = u.array().colwise() * vv;
  out.j5 = u.array().colwise() * (v2 * uu);
  return out;
}

void RemainderTracker::observe(const State& before, const State& after) {
  const double dt = after.t - before.t;
  const Integrands next = integrands(after);
  auto add = [dt](Field3& sum, const Field3& a, const Field3& b) { sum += 0.5 * dt * (a + b); };
  add(sums_.lap, last_.lap, next.lap);
  add(sums_.force, last_.force, next.force);
  add(sums_.lap_dot, last_.lap_dot, next.lap_dot);
  add(sums_.force_sq, last_.force_sq, next.force_sq);
  add(sums_.j2, last_.j2, next.j2);
  add(sums_.j3, last_.j3, next.j3);
  add(sums_.j4, last_.j4, next.j4);
  add(sums_.j5, last_.j5, next.j5);
  last_ = next;
}

RemainderSample RemainderTracker::sample(const State& current) const {
  const Eigen::ArrayXd k = 1.5 / gamma_ * phi_eff_.array();  // 3c/(2 gamma) phi
  const Eigen::ArrayXd uv = dot_rows(current.u, current.v).array();
  std::array<Field3, 6> j;
  j[0] = -(current.u.array().colwise() * (mu_ * k * uv)).matrix();
  j[1] = -mu_ * sums_.j2;
  j[2] = (sums_.j3.array().colwise() * (mu_ * k)).matrix();
  j[3] = (sums_.j4.array().colwise() * (mu_ * k)).matrix();
  j[4] = -(sums_.j5.array().colwise() * (mu_ * k)).matrix();
  j[5] = current.acc_noise;

  Field3 remainder = constant_;
  RemainderSample out;
  out.t = current.t;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.j[i] = norm_l2(grid_, j[i]);
    remainder += j[i];
  }
  Field3 rhs = momentum0_ + sums_.lap + sums_.force + remainder;
  rhs.array() += (sums_.lap_dot + sums_.force_sq).array().colwise() * k;
  out.identity_residual = norm_l2(grid_, Field3(momentum(current) - rhs));
  return out;
}

std::vector<RemainderSample> remainder_terms(const SpdeStepper& stepper, const State& initial,
                                             const IncrementSource& increments,
                                             std::size_t stride) {
  if (stride == 0) throw ParameterError("remainder_terms: stride must be >= 1");
  RemainderTracker tracker(stepper.grid(), stepper.basis(), stepper.params(), initial);
  std::vector<RemainderSample> out{tracker.sample(initial)};
  const std::size_t steps = stepper.step_count();
  State state = initial;
  for (std::size_t k = 1; k <= steps; ++k) {
    State next = stepper.step(state, increments(state.steps));
    tracker.observe(state, next);
    state = std::move(next);
    if (k % stride == 0 || k == steps) out.push_back(tracker.sample(state));
  }
  return out;
}

// Study ----------------------------------------------------------------------

void validate(const StudyConfig& config) {
  if (config.mus.empty()) throw ParameterError("study needs at least one mass");
  for (std::size_t i = 0; i < config.mus.size(); ++i) {
    const double mu = config.mus[i];
    if (!(mu > 0.0 && mu <= 1.0)) throw ParameterError("masses must lie in (0, 1]");
    if (i > 0 && !(mu < config.mus[i - 1])) {
      throw ParameterError("masses must be strictly decreasing");
    }
  }
  if (config.ensemble < 1) throw ParameterError("ensemble size must be >= 1");
  if (!(config.delta >= 0.0 && config.delta < 2.0)) {
    throw ParameterError("error exponent delta must lie in [0, 2)");
  }
  if (!(config.gamma > 0.0)) throw ParameterError("gamma must be positive");
  if (!(config.horizon > 0.0)) throw ParameterError("horizon must be positive");
  if (!std::isfinite(config.alpha)) throw ParameterError("alpha must be finite");
  if (config.alpha < 0.5 && !config.exploratory) {
    throw ParameterError("alpha < 1/2 has no known limit; enable exploratory mode");
  }
  if (config.outputs == 0) throw ParameterError("output grid needs at least one interval");
  if (!(config.dt >= 0.0)) throw ParameterError("dt must be positive (or 0 for automatic)");
  if (!(config.dt_scale > 0.0)) throw ParameterError("dt_scale must be positive");
  if (config.initial.empty()) throw ParameterError("initial datum needs at least one mode");
}

LimitTarget primary_target(const StudyConfig& config) {
  return config.alpha > 0.5 ? LimitTarget::parabolic : LimitTarget::corrected;
}

StepPlan plan_steps(const StudyConfig& config) {
  const Grid1D grid(config.length, config.n);
  const auto outputs = config.outputs;
  StepPlan plan;
  if (config.dt > 0.0) {
    const double per = config.horizon / static_cast<double>(outputs);
    const auto m = static_cast<std::size_t>(std::llround(per / config.dt));
    if (m == 0 || std::abs(static_cast<double>(m) * config.dt - per) > 1e-9 * per) {
      throw ParameterError("dt must divide T / outputs into a whole number of steps");
    }
    plan.fine_dt = config.dt;
    plan.fine_steps = m * outputs;
    plan.levels.assign(config.mus.size(), 0);
    plan.dts.assign(config.mus.size(), config.dt);
    for (double mu : config.mus) {
      if (config.dt > SpdeParams::max_stable_dt(mu, config.gamma, grid) * (1.0 + 1e-12)) {
        throw ParameterError("dt violates the stability bound at mu = " + std::to_string(mu));
      }
    }
    return plan;
  }

  auto target = [&](double mu) {
    return std::min(SpdeParams::max_stable_dt(mu, config.gamma, grid), config.dt_scale * mu);
  };
  const double finest = target(config.mus.back());
  int max_level = 0;
  for (double mu : config.mus) {
    const int level = static_cast<int>(std::floor(std::log2(target(mu) / finest) + 1e-12));
    plan.levels.push_back(std::max(level, 0));
    max_level = std::max(max_level, plan.levels.back());
  }
  const std::size_t block = std::size_t{1} << max_level;
  auto per_output = static_cast<std::size_t>(
      std::ceil(config.horizon / (static_cast<double>(outputs) * finest) * (1.0 - 1e-12)));
  per_output = (per_output + block - 1) / block * block;
  plan.fine_steps = per_output * outputs;
  plan.fine_dt = config.horizon / static_cast<double>(plan.fine_steps);
  for (int level : plan.levels) plan.dts.push_back(plan.fine_dt * static_cast<double>(1 << level));
  return plan;
}

RngStream sample_stream(const StudyConfig& config, std::size_t mu_index, std::size_t sample) {
  const std::uint64_t level = config.common_random_numbers ? 0 : mu_index;
  return derive_stream({config.master_seed}, level, sample);
}

namespace {

struct Targets {
  LimitTrajectory corrected;
  LimitTrajectory parabolic;
};

SampleRecord run_sample(const StudyConfig& config, const Grid1D& grid, const NoiseBasis& basis,
                        const SineTransform<double>& transform, const StepPlan& plan,
                        const Targets& targets, LimitTarget target, const State& initial,
                        std::size_t mu_index, std::size_t sample) {
  SampleRecord rec;
  rec.mu_index = mu_index;
  rec.sample = sample;
  rec.mu = config.mus[mu_index];
  const RngStream stream = sample_stream(config, mu_index, sample);
  rec.seed = stream.id;

  SpdeParams params;
  params.mu = rec.mu;
  params.gamma = config.gamma;
  params.alpha = config.alpha;
  params.dt = plan.dts[mu_index];
  params.horizon = config.horizon;
  params.projection = config.projection;
  params.stream = stream;

  const int level = plan.levels[mu_index];
  const double fine_dt = plan.fine_dt;
  const IncrementSource increments = [&basis, fine_dt, stream, level](std::uint64_t k) {
    return coarse_increment(basis, fine_dt, stream, k, level);
  };

  const LimitTrajectory& primary =
      target == LimitTarget::parabolic ? targets.parabolic : targets.corrected;
  const LimitTrajectory& alternate =
      target == LimitTarget::parabolic ? targets.corrected : targets.parabolic;
  auto compare = [&](const State& s, std::size_t o) {
    rec.error = std::max(rec.error, sobolev_norm(transform, s.u - primary.u[o], config.delta));
    rec.error_alternate =
        std::max(rec.error_alternate, sobolev_norm(transform, s.u - alternate.u[o], config.delta));
  };

  try {
    const SpdeStepper stepper(grid, basis, params);
    const std::size_t steps = plan.fine_steps >> level;
    const std::size_t per_output = steps / config.outputs;
    RemainderTracker tracker(grid, basis, params, initial);
    const double e0 = energy(grid, initial, params);
    State state = initial;
    compare(state, 0);
    for (std::size_t k = 1; k <= steps; ++k) {
      State next = stepper.step(state, increments(state.steps));
      tracker.observe(state, next);
      state = std::move(next);
      rec.energy_residual =
          std::max(rec.energy_residual, std::abs(energy(grid, state, params) - e0) / e0);
      const ConstraintResiduals c = constraint_residuals(grid, state);
      rec.theta_max = std::max(rec.theta_max, std::abs(c.theta));
      rec.eta_max = std::max(rec.eta_max, std::abs(c.eta));
      if (k % per_output == 0) {
        compare(state, k / per_output);
        const RemainderSample r = tracker.sample(state);
        for (std::size_t i = 0; i < 6; ++i) rec.j_sup[i] = std::max(rec.j_sup[i], r.j[i]);
        rec.identity_residual = std::max(rec.identity_residual, r.identity_residual);
      }
    }
    if (!std::isfinite(rec.error) || !std::isfinite(rec.energy_residual)) {
      throw BlowUpError(steps, "non-finite diagnostics");
    }
  } catch (const BlowUpError& e) {
    rec.failed = true;
    rec.failure_step = e.step();
    rec.failure = e.what();
  }
  return rec;
}

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

double std_of(const std::vector<double>& xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : xs) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

}  // namespace

std::vector<LevelSummary> summarize(const StudyConfig& config, const StepPlan& plan,
                                    const std::vector<SampleRecord>& samples) {
  std::vector<LevelSummary> out(config.mus.size());
  for (std::size_t i = 0; i < config.mus.size(); ++i) {
    LevelSummary& s = out[i];
    s.mu = config.mus[i];
    s.dt = plan.dts.empty() ? 0.0 : plan.dts[i];
    std::vector<double> err, alt, energy_res, ident;
    std::array<std::vector<double>, 6> js;
    for (const SampleRecord& r : samples) {
      if (r.mu_index != i) continue;
      ++s.samples;
      if (r.failed) {
        ++s.failures;
        continue;
      }
      err.push_back(r.error);
      alt.push_back(r.error_alternate);
      energy_res.push_back(r.energy_residual);
      ident.push_back(r.identity_residual);
      for (std::size_t q = 0; q < 6; ++q) js[q].push_back(r.j_sup[q]);
    }
    s.mean_error = mean_of(err);
    s.std_error = std_of(err, s.mean_error);
    s.mean_error_alternate = mean_of(alt);
    s.std_error_alternate = std_of(alt, s.mean_error_alternate);
    s.mean_energy_residual = mean_of(energy_res);
    s.max_energy_residual =
        energy_res.empty() ? 0.0 : *std::max_element(energy_res.begin(), energy_res.end());
    s.mean_identity_residual = mean_of(ident);
    for (std::size_t q = 0; q < 6; ++q) {
      s.mean_j_sup[q] = mean_of(js[q]);
      s.remainder_max = std::max(s.remainder_max, s.mean_j_sup[q]);
    }
  }
  return out;
}

StudyResult run_study(const StudyConfig& config) {
  validate(config);
  const Grid1D grid(config.length, config.n);
  const NoiseBasis basis(config.modes, config.decay, grid);
  const SineTransform<double> transform(grid);

  StudyResult result;
  result.config = config;
  result.target = primary_target(config);
  result.exploratory = config.alpha < 0.5;
  result.plan = plan_steps(config);

  // Distinct children for every (mass, sample) job that needs one.
  std::set<std::uint64_t> seeds;
  std::size_t expected = 0;
  for (std::size_t i = 0; i < config.mus.size(); ++i) {
    if (config.common_random_numbers && i > 0) break;
    for (int s = 0; s < config.ensemble; ++s) {
      seeds.insert(sample_stream(config, i, static_cast<std::size_t>(s)).id);
      ++expected;
    }
  }
  if (seeds.size() != expected) throw ParameterError("child seed collision in the study grid");

  const Field3 u0 = repair_initial_datum(grid, field_from_modes(grid, config.initial), config.h2_cap);
  Field3 v0 = Field3::Zero(grid.n(), 3);
  if (!config.initial_velocity.empty()) {
    v0 = project_tangent(grid, u0, field_from_modes(grid, config.initial_velocity));
  }
  const State initial = initial_state(grid, u0, v0);

  LimitParams lp;
  lp.gamma = config.gamma;
  lp.horizon = config.horizon;
  Targets targets;
  targets.corrected = solve_limit(grid, u0, lp, basis, config.outputs);
  lp.parabolic = true;
  targets.parabolic = solve_limit(grid, u0, lp, basis, config.outputs);
  result.limit_dt = targets.corrected.dt;

  struct Job {
    std::size_t mu_index;
    std::size_t sample;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < config.mus.size(); ++i) {
    for (int s = 0; s < config.ensemble; ++s) jobs.push_back({i, static_cast<std::size_t>(s)});
  }
  result.samples.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t q = next.fetch_add(1); q < jobs.size(); q = next.fetch_add(1)) {
      result.samples[q] = run_sample(config, grid, basis, transform, result.plan, targets,
                                     result.target, initial, jobs[q].mu_index, jobs[q].sample);
    }
  };
  unsigned threads = config.threads ? config.threads : std::thread::hardware_concurrency();
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(jobs.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();

  std::sort(result.samples.begin(), result.samples.end(),
            [](const SampleRecord& a, const SampleRecord& b) {
              return std::tie(a.mu_index, a.sample) < std::tie(b.mu_index, b.sample);
            });
  result.levels = summarize(config, result.plan, result.samples);
  for (const LevelSummary& s : result.levels) {
    if (2 * s.failures > s.samples) {
      result.ok = false;
      result.message = "more than half of the trajectories failed at mu = " + std::to_string(s.mu);
    }
  }
  return result;
}

StudyResult scaling_experiment(const StudyConfig& config) {
  if (config.alpha < 0.5 && !config.exploratory) {
    throw ParameterError("alpha < 1/2 is exploratory only; enable exploratory mode");
  }
  return run_study(config);
}

}  // namespace sml
