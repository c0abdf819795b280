// Acceptance run at desk scale (n = 127, T = 1). Prints one PASS/FAIL line
// per criterion and exits nonzero when any of them fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sml/cli_io.hpp"
#include "sml/convergence_lab.hpp"
#include "sml/errors.hpp"
#include "sml/limit_pde.hpp"
#include "sml/noise_model.hpp"
#include "sml/oracles.hpp"
#include "sml/spde_sim.hpp"

using namespace sml;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool passed = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) passed = false;
    detail << (detail.tellp() > 0 ? "; " : "") << what << (ok ? "" : " [fail]");
  }
};

std::string num(double x) { return format_double(x); }

/// Least-squares slope of log(err) against log(dt).
double fitted_order(const std::vector<double>& dts, const std::vector<double>& errs) {
  double mx = 0, my = 0;
  const double n = static_cast<double>(dts.size());
  for (std::size_t i = 0; i < dts.size(); ++i) mx += std::log(dts[i]) / n, my += std::log(errs[i]) / n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < dts.size(); ++i) {
    const double dx = std::log(dts[i]) - mx;
    sxy += dx * (std::log(errs[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

bool strictly_decreasing(const std::vector<double>& xs) {
  for (std::size_t i = 1; i < xs.size(); ++i) {
    if (!(xs[i] < xs[i - 1])) return false;
  }
  return true;
}

std::string list(const std::vector<double>& xs) {
  std::string s = "[";
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? ", " : "") + num(xs[i]);
  return s + "]";
}

Field3 random_field(std::mt19937_64& rng, int rows) {
  std::normal_distribution<double> g;
  Field3 f(rows, 3);
  for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = g(rng);
  return f;
}

Field3 smooth_field(std::mt19937_64& rng, const Grid1D& g, int modes) {
  std::normal_distribution<double> n;
  Field3 f = Field3::Zero(g.n(), 3);
  for (int k = 1; k <= modes; ++k) {
    for (int d = 0; d < 3; ++d) f += sine_mode(g, k, d, n(rng) / k);
  }
  return f;
}

// Desk-scale single-path setup shared by criteria 2, 3 and 7.
struct PathRun {
  double energy_drift = 0.0;   // sup_t |E(t) - E(0)| / E(0)
  double constraint = 0.0;     // sup_t |theta| + |eta|
  double identity_residual = 0.0;  // at t = T
};

PathRun run_path(double dt, double fine_dt, bool projection, bool track_identity) {
  const RunConfig defaults;
  const Grid1D g(1.0, 127);
  const NoiseBasis b(16, 2.0, g);
  StudyConfig sc;
  sc.master_seed = 42;
  SpdeParams p;
  p.mu = 0.1;
  p.dt = dt;
  p.horizon = 1.0;
  p.projection = projection;
  p.stream = sample_stream(sc, 0, 0);
  const SpdeStepper st(g, b, p);
  const int level = static_cast<int>(std::lround(std::log2(dt / fine_dt)));
  const IncrementSource inc = [&](std::uint64_t k) {
    return coarse_increment(b, fine_dt, p.stream, k, level);
  };
  const State s0 = initial_state(g, repair_initial_datum(g, field_from_modes(g, defaults.initial), 1e4),
                                 zero_field(g));
  const double e0 = energy(g, s0, p);
  PathRun out;
  std::optional<RemainderTracker> tracker;
  if (track_identity) tracker.emplace(g, b, p, s0);
  const State last = run_steps(st, s0, st.step_count(), inc,
                               [&](const State& before, const State& after, const WienerIncrement&) {
                                 out.energy_drift = std::max(out.energy_drift, std::abs(energy(g, after, p) - e0) / e0);
                                 const ConstraintResiduals c = constraint_residuals(g, after);
                                 out.constraint = std::max(out.constraint, std::abs(c.theta) + std::abs(c.eta));
                                 if (tracker) tracker->observe(before, after);
                               });
  if (tracker) out.identity_residual = tracker->sample(last).identity_residual;
  return out;
}

// 1 -------------------------------------------------------------------------

Verdict algebraic_oracles() {
  const auto t0 = Clock::now();
  Verdict v;
  std::mt19937_64 rng(1001);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> uni(0.0, 10.0);

  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Vec3 a(n(rng), n(rng), n(rng)), c(n(rng), n(rng), n(rng));
    const Vec3 o = oracle::double_cross(a, c);
    worst = std::max(worst, (triple_cross(a, c) - o).norm() / (a.squaredNorm() * c.norm()));
  }
  v.require(worst <= 1e-10, "triple cross " + num(worst));

  const Grid1D g(1.0, 63);
  const NoiseBasis basis(16, 2.0, g);
  worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Field3 u = random_field(rng, g.n()), w = random_field(rng, g.n());
    const Field3 o = oracle::trace_by_summation(u, w, basis);
    worst = std::max(worst, (strat_correction(u, w, basis) - o).norm() / o.norm());
  }
  v.require(worst <= 1e-10, "trace summation " + num(worst));

  worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Field3 u = random_field(rng, 64), r = random_field(rng, 64);
    Eigen::VectorXd phi(64);
    for (int j = 0; j < 64; ++j) phi(j) = uni(rng);
    const double gamma = 0.1 + 0.2 * uni(rng);
    const Field3 x = mobility_apply_inverse<double>(u, phi, gamma, r);
    worst = std::max(worst, (mobility_apply<double>(u, phi, gamma, x) - r).norm() / r.norm());
    for (int j = 0; j < 64; ++j) {
      const Eigen::Matrix3d M = oracle::mobility_matrix(u.row(j).transpose(), phi(j), gamma);
      worst = std::max(worst, (M * x.row(j).transpose() - r.row(j).transpose()).norm() / r.row(j).norm());
    }
  }
  v.require(worst <= 1e-10, "mobility multiply-back " + num(worst));

  worst = 0.0;
  LimitParams lp;
  for (int i = 0; i < 100; ++i) {
    const Field3 u = normalize_sphere(g, smooth_field(rng, g, 8));
    const Field3 ut = limit_rhs(g, u, basis, lp);
    const double scale = norm_l2(g, harmonic_map_force(g, u)) + lp.gamma * norm_l2(g, ut);
    worst = std::max(worst, explicit_form_residual(g, u, ut, basis, lp) / scale);
  }
  v.require(worst <= 1e-10, "formulation equivalence " + num(worst));

  const double secs = seconds_since(t0);
  v.require(secs < 5.0, "runtime " + num(secs) + " s");
  return v;
}

// 2 -------------------------------------------------------------------------

Verdict energy_identity() {
  const auto t0 = Clock::now();
  Verdict v;
  const std::vector<double> dts{4e-4, 2e-4, 1e-4};
  std::vector<double> drift;
  for (double dt : dts) drift.push_back(run_path(dt, 1e-4, true, false).energy_drift);
  v.require(drift.back() <= 1e-2, "drift at dt=1e-4 " + num(drift.back()));
  v.require(strictly_decreasing(drift), "drifts " + list(drift));
  const double order = fitted_order(dts, drift);
  v.require(order >= 0.5, "order " + num(order));
  const double secs = seconds_since(t0);
  v.require(secs < 60.0, "runtime " + num(secs) + " s");
  return v;
}

// 3 -------------------------------------------------------------------------

Verdict tangent_bundle() {
  Verdict v;
  const std::vector<double> dts{4e-4, 2e-4, 1e-4};
  std::vector<double> off;
  for (double dt : dts) {
    try {
      off.push_back(run_path(dt, 1e-4, false, false).constraint);
    } catch (const BlowUpError& e) {
      off.push_back(std::numeric_limits<double>::infinity());
      v.require(false, "projection off, dt=" + num(dt) + ": " + e.what());
    }
  }
  v.require(off.back() <= 1e-2, "projection off, dt=1e-4: " + num(off.back()));
  v.require(strictly_decreasing(off), "projection off " + list(off));
  const double on = run_path(1e-4, 1e-4, true, false).constraint;
  v.require(on <= 1e-12, "projection on " + num(on));
  return v;
}

// 4 -------------------------------------------------------------------------

Verdict equilibria() {
  Verdict v;
  const Grid1D g(1.0, 127);
  const NoiseBasis b(16, 2.0, g);
  double step_worst = 0.0, total_worst = 0.0;
  for (int k : {1, 2, 5}) {
    const Field3 u0 = normalize_sphere(g, sine_mode(g, k, k % 3));
    for (std::uint64_t seed : {1, 2, 3}) {
      SpdeParams p;
      p.mu = 0.1;
      p.dt = 1e-4;
      p.stream = {seed};
      const SpdeStepper st(g, b, p);
      const State last = run_steps(st, initial_state(g, u0, zero_field(g)), st.step_count(), stream_increments(st),
                                   [&](const State& a, const State& c, const WienerIncrement&) {
                                     step_worst = std::max(step_worst, (c.u - a.u).cwiseAbs().maxCoeff());
                                   });
      total_worst = std::max(total_worst, (last.u - u0).cwiseAbs().maxCoeff());
    }
  }
  v.require(step_worst <= 1e-12, "spde per step " + num(step_worst));
  v.require(total_worst <= 1e-10, "spde total " + num(total_worst));

  step_worst = total_worst = 0.0;
  LimitParams lp;
  const LimitSolver<double> solver(g, b, lp);
  const auto [dt, steps] = solver.schedule(1);
  for (int k : {1, 2, 5}) {
    const Field3 u0 = normalize_sphere(g, sine_mode(g, k, k % 3));
    Field3 u = u0;
    for (std::size_t i = 0; i < steps; ++i) {
      const Field3 next = solver.step(u, dt);
      step_worst = std::max(step_worst, (next - u).cwiseAbs().maxCoeff());
      u = next;
    }
    total_worst = std::max(total_worst, (u - u0).cwiseAbs().maxCoeff());
  }
  v.require(step_worst <= 1e-12, "limit per step " + num(step_worst));
  v.require(total_worst <= 1e-10, "limit total " + num(total_worst));
  return v;
}

// 5 -------------------------------------------------------------------------

Verdict limit_structure() {
  Verdict v;
  const RunConfig defaults;
  std::vector<double> residual;
  bool energy_ok = true;
  for (int n : {31, 63, 127}) {
    const Grid1D g(1.0, n);
    const NoiseBasis b(16, 2.0, g);
    LimitParams p;
    const LimitTrajectory tr =
        solve_limit(g, repair_initial_datum(g, field_from_modes(g, defaults.initial), 1e4), p, b, 256);
    double worst = 0.0;
    for (const LimitRow& r : limit_rows(g, tr, p.gamma)) {
      worst = std::max(worst, r.sphere_residual);
      if (!(r.energy_lhs <= r.energy_rhs * (1.0 + 1e-6))) energy_ok = false;
    }
    residual.push_back(worst);
  }
  v.require(strictly_decreasing(residual), "sphere residual " + list(residual));
  v.require(energy_ok, "energy inequality row-wise");

  const Grid1D g(1.0, 127);
  const NoiseBasis b(16, 2.0, g);
  const LimitParams p;
  const Field3 u0 = repair_initial_datum(g, field_from_modes(g, defaults.initial), 1e4);
  Field3 w = field_from_modes(g, {{2, 2, 1.0}, {4, 0, 0.5}});
  w /= norm_l2(g, w);
  std::vector<ComparisonResult> runs;
  for (double eps : {1e-2, 1e-3}) {
    runs.push_back(comparison_experiment(g, u0, normalize_sphere(g, Field3(u0 + eps * w)), p, b, 64));
  }
  double overlay = 0.0;
  for (std::size_t i = 0; i < runs[0].series.size(); ++i) {
    const double a = runs[0].series[i].lhs() / runs[0].initial_distance_sq;
    const double c = runs[1].series[i].lhs() / runs[1].initial_distance_sq;
    overlay = std::max(overlay, std::abs(a - c) / std::max(a, c));
  }
  v.require(overlay <= 0.1, "normalized curves differ by " + num(overlay));
  const double c2a = runs[0].c2, c2b = runs[1].c2;
  const double spread = std::abs(c2a - c2b) / std::max(std::abs(c2a), std::abs(c2b));
  v.require(spread <= 0.2, "c2 " + num(c2a) + " vs " + num(c2b));
  return v;
}

// 6, 7, 9 share the default study --------------------------------------------

std::vector<double> means(const StudyResult& r) {
  std::vector<double> m;
  for (const LevelSummary& l : r.levels) m.push_back(l.mean_error);
  return m;
}

Verdict small_mass_trend(const StudyResult& r, double secs) {
  Verdict v;
  v.require(r.ok, "failure budget");
  const std::vector<double> m = means(r);
  v.require(strictly_decreasing(m), "mean errors " + list(m));
  v.require(m.back() <= 0.5 * m.front(), "ratio " + num(m.back() / m.front()));
  v.require(secs <= 600.0, "runtime " + num(secs) + " s");
  return v;
}

Verdict remainder_decay(const StudyResult& r) {
  Verdict v;
  std::vector<double> rem;
  for (const LevelSummary& l : r.levels) rem.push_back(l.remainder_max);
  bool monotone = true;
  for (std::size_t i = 1; i < rem.size(); ++i) {
    if (!(rem[i] <= 1.1 * rem[i - 1])) monotone = false;
  }
  v.require(monotone, "max_i sup_t |J_i| " + list(rem));

  const std::vector<double> dts{4e-4, 2e-4, 1e-4};
  std::vector<double> res;
  for (double dt : dts) res.push_back(run_path(dt, 1e-4, true, true).identity_residual);
  const double order = fitted_order(dts, res);
  v.require(strictly_decreasing(res), "identity residual " + list(res));
  v.require(order >= 1.0, "order " + num(order));
  return v;
}

Verdict alpha_control() {
  Verdict v;
  StudyConfig c;
  c.alpha = 1.0;
  const StudyResult r = scaling_experiment(c);
  v.require(r.ok && r.target == LimitTarget::parabolic, "parabolic target");
  const std::vector<double> m = means(r);
  v.require(strictly_decreasing(m), "errors vs parabolic " + list(m));
  const double sep = r.levels.back().mean_error_alternate / r.levels.back().mean_error;
  v.require(sep >= 3.0, "corrected / parabolic at smallest mass " + num(sep));
  return v;
}

std::string study_bytes(const StudyResult& r) {
  std::ostringstream out;
  out << to_json(r).dump(2) << '\n';
  CsvWriter csv(out, sample_columns());
  for (const SampleRecord& s : r.samples) csv.raw_row(sample_cells(s));
  return out.str();
}

Verdict reproducibility(const StudyResult& first) {
  Verdict v;
  StudyConfig c;
  c.threads = 1;
  const StudyResult again = run_study(c);
  v.require(study_bytes(again) == study_bytes(first), "same seed byte-identical");

  c.master_seed = 4242;
  const StudyResult other = run_study(c);
  bool overlap = true;
  for (std::size_t i = 0; i < first.levels.size(); ++i) {
    const LevelSummary& a = first.levels[i];
    const LevelSummary& b = other.levels[i];
    const double sa = a.std_error / std::sqrt(static_cast<double>(a.samples));
    const double sb = b.std_error / std::sqrt(static_cast<double>(b.samples));
    if (std::abs(a.mean_error - b.mean_error) > 2.0 * (sa + sb)) overlap = false;
  }
  v.require(overlap, "2 sigma overlap, means " + list(means(first)) + " vs " + list(means(other)));
  return v;
}

}  // namespace

int main() {
  bool all = true;
  auto report = [&](int id, const char* name, const std::function<Verdict()>& f) {
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = f();
    } catch (const std::exception& e) {
      v.require(false, std::string("exception: ") + e.what());
    }
    all = all && v.passed;
    std::printf("%s %d %s (%.1f s): %s\n", v.passed ? "PASS" : "FAIL", id, name, seconds_since(t0),
                v.detail.str().c_str());
    std::fflush(stdout);
  };

  report(1, "algebraic oracles", algebraic_oracles);
  report(2, "pathwise energy identity", energy_identity);
  report(3, "tangent-bundle invariance", tangent_bundle);
  report(4, "exact equilibria", equilibria);
  report(5, "limit-solver structure", limit_structure);

  StudyResult study;
  double study_secs = 0.0;
  {
    const auto t0 = Clock::now();
    try {
      study = run_study(StudyConfig{});
    } catch (const std::exception& e) {
      study.ok = false;
      study.message = e.what();
    }
    study_secs = seconds_since(t0);
  }
  report(6, "small-mass trend", [&] { return small_mass_trend(study, study_secs); });
  report(7, "remainder decay", [&] { return remainder_decay(study); });
  report(8, "alpha-scaling control", alpha_control);
  report(9, "reproducibility", [&] { return reproducibility(study); });

  std::printf("%s\n", all ? "ALL CRITERIA PASS" : "SOME CRITERIA FAIL");
  return all ? 0 : 1;
}
