#include "sml/invariants.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <optional>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "sml/cli_io.hpp"
#include "sml/convergence_lab.hpp"
#include "sml/limit_pde.hpp"
#include "sml/noise_model.hpp"
#include "sml/oracles.hpp"
#include "sml/spde_sim.hpp"

namespace sml {

namespace {

using Rng = std::mt19937_64;

Field3 random_field(Rng& rng, int n, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Field3 f(n, 3);
  for (Eigen::Index j = 0; j < f.size(); ++j) f.data()[j] = g(rng);
  return f;
}

/// Smooth field: the first `modes` sine modes with random coefficients.
Field3 random_smooth_field(Rng& rng, const Grid1D& grid, int modes) {
  std::normal_distribution<double> g(0.0, 1.0);
  Field3 f = Field3::Zero(grid.n(), 3);
  for (int k = 1; k <= modes; ++k) {
    for (int d = 0; d < 3; ++d) f += sine_mode(grid, k, d, g(rng) / k);
  }
  return f;
}

double rel(double err, double scale) { return err / std::max(scale, 1e-300); }

std::string fmt(double x) {
  std::ostringstream s;
  s.precision(3);
  s << x;
  return s.str();
}

InvariantResult bound(double value, double tolerance, std::string detail = {}) {
  InvariantResult r;
  r.value = value;
  r.tolerance = tolerance;
  r.passed = std::isfinite(value) && value <= tolerance;
  r.detail = std::move(detail);
  return r;
}

InvariantResult holds(bool ok, std::string detail = {}) {
  InvariantResult r;
  r.value = ok ? 0.0 : 1.0;
  r.tolerance = 0.0;
  r.passed = ok;
  r.detail = std::move(detail);
  return r;
}

template <typename E, typename F>
bool throws(F f) {
  try {
    f();
  } catch (const E&) {
    return true;
  } catch (...) {
    return false;
  }
  return false;
}

bool strictly_decreasing(const std::vector<double>& x) {
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (!(x[i] < x[i - 1])) return false;
  }
  return true;
}

std::string join(const std::vector<double>& x) {
  std::string s;
  for (std::size_t i = 0; i < x.size(); ++i) s += (i ? ", " : "") + fmt(x[i]);
  return s;
}

// Shared SPDE set-up: a fixed Brownian path refined by halving.

struct PathRun {
  double energy_drift = 0.0;     // max_t |E(t) - E(0)| / E(0)
  double constraint = 0.0;       // max_t |theta| + |eta|
  double sphere = 0.0;           // max_t | |u|_H - 1 |
  double step_change = 0.0;      // max per-step |u_{k+1} - u_k|_inf
  double total_change = 0.0;     // |u_N - u_0|_inf
  double neutrality = 0.0;       // max pointwise |u x v|^2 phi + v.phi u x (u x v), relative
  bool acc_v2_monotone = true;
  bool finite = true;
  std::vector<double> energies;  // every step
  double identity_residual = 0.0;
};

struct PathSetup {
  Grid1D grid{1.0, 31};
  int modes = 8;
  double mu = 0.1;
  double horizon = 0.25;
  double fine_dt = 1e-4;
  bool projection = true;
  bool mutate = false;
  RngStream stream{};
  Field3 u0;
  Field3 v0;
};

PathSetup default_setup(const InvariantOptions& options) {
  PathSetup s;
  s.mutate = options.mutate_correction;
  s.stream = derive_stream({options.seed}, 1);
  s.u0 = normalize_sphere(s.grid, field_from_modes(s.grid, {{1, 0, 1.0}, {2, 1, 0.5}, {3, 2, 0.3}}));
  s.v0 = Field3::Zero(s.grid.n(), 3);
  return s;
}

PathRun run_path(const PathSetup& setup, int level, bool track_remainder = false) {
  const NoiseBasis basis(setup.modes, 2.0, setup.grid);
  SpdeParams params;
  params.mu = setup.mu;
  params.dt = setup.fine_dt * std::ldexp(1.0, level);
  params.horizon = setup.horizon;
  params.projection = setup.projection;
  params.stream = setup.stream;
  if (setup.mutate) params.correction_scale = -1.0;
  const SpdeStepper stepper(setup.grid, basis, params);

  State state = initial_state(setup.grid, setup.u0, setup.v0);
  PathRun run;
  const double e0 = energy(setup.grid, state, params);
  run.energies.push_back(e0);
  std::optional<RemainderTracker> tracker;
  if (track_remainder) tracker.emplace(setup.grid, basis, params, state);
  const Field3 first = state.u;
  const std::size_t steps = stepper.step_count();
  for (std::size_t k = 0; k < steps; ++k) {
    const WienerIncrement dW = coarse_increment(basis, setup.fine_dt, setup.stream, k, level);
    State next = stepper.step(state, dW);
    if (tracker) tracker->observe(state, next);
    run.step_change = std::max(run.step_change, (next.u - state.u).cwiseAbs().maxCoeff());
    if (next.acc_v2 < state.acc_v2) run.acc_v2_monotone = false;
    state = std::move(next);

    const double e = energy(setup.grid, state, params);
    run.energies.push_back(e);
    run.energy_drift = std::max(run.energy_drift, std::abs(e - e0) / e0);
    const ConstraintResiduals c = constraint_residuals(setup.grid, state);
    run.constraint = std::max(run.constraint, std::abs(c.theta) + std::abs(c.eta));
    run.sphere = std::max(run.sphere, std::abs(norm_l2(setup.grid, state.u) - 1.0));
    if (!all_finite(diagnose(setup.grid, state, params, 10.0))) run.finite = false;

    // Pointwise noise energy-neutrality at the accepted state.
    const Field3 uxv = cross_rows(state.u, state.v);
    const Field3 corr = strat_correction(state.u, state.v, basis);
    const Eigen::VectorXd lhs =
        uxv.rowwise().squaredNorm().cwiseProduct(basis.phi()) + dot_rows(state.v, corr);
    const double scale =
        (basis.phi().array() * state.u.rowwise().squaredNorm().array() *
         state.v.rowwise().squaredNorm().array()).maxCoeff();
    if (scale > 0.0) run.neutrality = std::max(run.neutrality, lhs.cwiseAbs().maxCoeff() / scale);
  }
  run.total_change = (state.u - first).cwiseAbs().maxCoeff();
  if (tracker) run.identity_residual = tracker->sample(state).identity_residual;
  return run;
}

// Registry -----------------------------------------------------------------

struct Check {
  const char* name;
  std::function<InvariantResult()> run;
};

std::vector<Check> registry(const InvariantOptions& opt) {
  std::vector<Check> checks;
  auto add = [&](const char* name, std::function<InvariantResult()> f) {
    checks.push_back({name, std::move(f)});
  };
  auto rng = [seed = opt.seed](std::uint64_t salt) { return Rng(seed ^ (salt * 0x9e3779b97f4a7c15ULL)); };

  // field_core ---------------------------------------------------------------

  add("field_core.grid_spacing", [] {
    double worst = 0.0;
    for (int n : {2, 7, 31, 127, 1000}) {
      for (double L : {1.0, 0.3, 7.5}) {
        const Grid1D g(L, n);
        worst = std::max(worst, std::abs(g.h() * (n + 1) - L) / (L * std::numeric_limits<double>::epsilon()));
      }
    }
    return bound(worst, 1.0, "|h (n+1) - L| in units of L eps");
  });

  add("field_core.grid_interior_nodes", [] {
    bool ok = true;
    for (int n : {2, 31, 127, 4095}) {
      const Grid1D g(1.0, n);
      ok = ok && g.x(0) > 0.0 && g.x(n - 1) < 1.0;
    }
    return holds(ok, "0 < x_1 and x_n < L");
  });

  add("field_core.field_shape", [] {
    const Grid1D g(1.0, 15);
    const bool ok = throws<ShapeError>([&] { inner_l2(g, Field3(14, 3), Field3(14, 3)); }) &&
                    throws<ShapeError>([&] { laplacian(g, Field3::Zero(16, 3)); });
    return holds(ok, "fields of the wrong length are rejected");
  });

  add("field_core.dirichlet_boundary", [] {
    const Grid1D g(1.0, 15);
    Field3 f = Field3::Zero(15, 3);
    f.row(0).setConstant(1.0);
    f.row(14).setConstant(1.0);
    const Field3 lap = laplacian(g, f);
    const double h2 = g.h() * g.h();
    const double err = std::max(std::abs(lap(0, 0) * h2 + 2.0), std::abs(lap(14, 2) * h2 + 2.0)) +
                       std::abs(lap(1, 1) * h2 - 1.0);
    return bound(err, 1e-12, "boundary neighbours enter the stencil as 0");
  });

  add("field_core.spectrum_round_trip", [=] {
    auto r = rng(1);
    const Grid1D g(1.0, 63);
    const SineTransform<double> t(g);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      const Field3 f = random_field(r, g.n());
      worst = std::max(worst, rel((t.inverse(t.forward(f)) - f).norm(), f.norm()));
    }
    return bound(worst, 1e-12, "relative error of field -> spectrum -> field");
  });

  add("field_core.inner_bilinear_symmetric", [=] {
    auto r = rng(2);
    const Grid1D g(1.0, 63);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const Field3 f = random_field(r, g.n()), h = random_field(r, g.n()), w = random_field(r, g.n());
      const double a = 1.7, b = -0.3;
      const double scale = norm_l2(g, f) * norm_l2(g, w) + norm_l2(g, h) * norm_l2(g, w);
      worst = std::max(worst, rel(std::abs(inner_l2(g, f, h) - inner_l2(g, h, f)), scale));
      const Field3 comb = a * f + b * h;
      worst = std::max(worst, rel(std::abs(inner_l2(g, comb, w) - a * inner_l2(g, f, w) -
                                           b * inner_l2(g, h, w)),
                                  scale));
    }
    return bound(worst, 1e-14, "relative defect of symmetry and linearity");
  });

  add("field_core.summation_by_parts", [=] {
    auto r = rng(3);
    const Grid1D g(1.0, 63);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const Field3 f = random_field(r, g.n()), h = random_field(r, g.n());
      const double a = inner_l2(g, laplacian(g, f), h);
      const double b = inner_l2(g, f, laplacian(g, h));
      const double scale = norm_l2(g, laplacian(g, f)) * norm_l2(g, h);
      worst = std::max(worst, rel(std::abs(a - b), scale));
    }
    return bound(worst, 1e-12, "<A f, g> vs <f, A g>");
  });

  add("field_core.eigen_consistency", [] {
    const Grid1D g(1.0, 63);
    double worst = 0.0;
    for (int k = 1; k <= g.n(); ++k) {
      const Field3 s = sine_mode(g, k, k % 3);
      const Field3 res = laplacian(g, s) + g.eigenvalue(k) * s;
      worst = std::max(worst, rel(res.norm(), g.eigenvalue(k) * s.norm()));
    }
    return bound(worst, 1e-12, "A_h s_k + lambda_k s_k, every k");
  });

  add("field_core.triple_cross", [=] {
    auto r = rng(4);
    std::normal_distribution<double> n(0.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const Vec3 h(n(r), n(r), n(r)), k(n(r), n(r), n(r));
      worst = std::max(worst, (triple_cross(h, k) - oracle::double_cross(h, k)).cwiseAbs().maxCoeff());
    }
    return bound(worst, 1e-13, "max abs error over 1000 pairs");
  });

  add("field_core.sobolev_consistency", [=] {
    auto r = rng(5);
    const Grid1D g(1.0, 63);
    const SineTransform<double> t(g);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      const Field3 f = random_field(r, g.n());
      worst = std::max(worst, rel(std::abs(sobolev_norm(t, f, 0.0) - norm_l2(g, f)), norm_l2(g, f)));
      const double h1 = std::sqrt(h1_seminorm_sq(g, f));
      worst = std::max(worst, rel(std::abs(sobolev_norm(t, f, 1.0) - h1), h1));
    }
    return bound(worst, 1e-10, "delta = 0 and 1 against the direct norms");
  });

  add("field_core.project_tangent", [=] {
    auto r = rng(6);
    const Grid1D g(1.0, 63);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const Field3 u = random_field(r, g.n()), w = random_field(r, g.n());
      const Field3 p = project_tangent(g, u, w);
      const double scale = norm_l2(g, u) * norm_l2(g, w);
      worst = std::max(worst, rel(std::abs(inner_l2(g, u, p)), scale));
      worst = std::max(worst, rel(norm_l2(g, project_tangent(g, u, p) - p), norm_l2(g, w)));
    }
    return bound(worst, 1e-12, "orthogonality and idempotence");
  });

  // noise_model ----------------------------------------------------------------

  add("noise_model.kernel_nonnegative", [] {
    double worst = 0.0;
    for (int m : {1, 4, 16, 31}) {
      const NoiseBasis b(m, 2.0, Grid1D(1.0, 31));
      worst = std::min({worst, b.phi().minCoeff(), b.phi1().minCoeff()});
    }
    return bound(-worst, 0.0, "minus the smallest kernel value");
  });

  add("noise_model.kernel_bounds", [] {
    double worst = 0.0;
    for (double p : {2.0, 2.5, 4.0}) {
      for (double L : {1.0, 2.0}) {
        const NoiseBasis b(16, p, Grid1D(L, 63));
        worst = std::max(worst, b.phi().maxCoeff() / b.phi_bound() - 1.0);
        worst = std::max(worst, b.phi1().maxCoeff() / b.phi1_bound() - 1.0);
      }
    }
    return bound(worst, 1e-12, "max kernel / closed-form bound - 1");
  });

  add("noise_model.hypothesis_enforced", [] {
    const Grid1D g(1.0, 15);
    const bool ok = throws<HypothesisError>([&] { NoiseBasis(4, 1.9, g); }) &&
                    throws<AliasingError>([&] { NoiseBasis(16, 2.0, g); }) &&
                    !throws<Error>([&] { NoiseBasis(15, 2.0, g); });
    return holds(ok, "p < 2 and m > n rejected");
  });

  add("noise_model.wiener_moments", [=] {
    const NoiseBasis b(1, 2.0, Grid1D(1.0, 15));
    const double dt = 1e-3;
    const int draws = 100000;
    const RngStream s = derive_stream({opt.seed}, 2);
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < draws; ++i) {
      const double x = sample_increment(b, dt, s, i).values(0);
      sum += x;
      sq += x * x;
    }
    const double mean = sum / draws;
    const double var = sq / draws - mean * mean;
    const double z = std::abs(mean) / std::sqrt(dt / draws);
    const double v = std::abs(var / dt - 1.0);
    InvariantResult r = bound(std::max(z / 4.0, v / 0.05), 1.0,
                              "|mean| = " + fmt(z) + " sigma, variance off by " + fmt(100 * v) + "%");
    return r;
  });

  add("noise_model.trace_oracle", [=] {
    auto r = rng(7);
    const Grid1D g(1.0, 31);
    const NoiseBasis b(16, 2.0, g);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const Field3 u = random_field(r, g.n()), v = random_field(r, g.n());
      const Field3 a = strat_correction(u, v, b);
      const Field3 o = oracle::trace_by_summation(u, v, b);
      worst = std::max(worst, rel((a - o).norm(), o.norm()));
    }
    return bound(worst, 1e-12, "closed form vs m-term summation");
  });

  add("noise_model.energy_neutrality", [=] {
    auto r = rng(8);
    const Grid1D g(1.0, 31);
    const NoiseBasis b(16, 2.0, g);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const Field3 u = random_field(r, g.n()), v = random_field(r, g.n());
      const Eigen::VectorXd lhs = cross_rows(u, v).rowwise().squaredNorm().cwiseProduct(b.phi()) +
                                  dot_rows(v, strat_correction(u, v, b));
      const Eigen::VectorXd scale =
          b.phi().cwiseProduct(u.rowwise().squaredNorm()).cwiseProduct(v.rowwise().squaredNorm());
      worst = std::max(worst, lhs.cwiseAbs().maxCoeff() / scale.maxCoeff());
    }
    return bound(worst, 1e-14, "|u x v|^2 phi + v . phi u x (u x v), relative");
  });

  add("noise_model.noise_orthogonal_to_v", [=] {
    auto r = rng(9);
    const Grid1D g(1.0, 31);
    const NoiseBasis b(16, 2.0, g);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const Field3 u = random_field(r, g.n()), v = random_field(r, g.n());
      const Field3 kick = apply_noise(u, v, b, sample_increment(b, 1e-2, {opt.seed}, i));
      const Eigen::VectorXd d = dot_rows(v, kick);
      const double scale = (v.rowwise().norm().cwiseProduct(kick.rowwise().norm())).maxCoeff();
      worst = std::max(worst, d.cwiseAbs().maxCoeff() / scale);
    }
    return bound(worst, 1e-14, "pointwise v . noise, relative");
  });

  add("noise_model.phi_monotone_in_m", [] {
    const Grid1D g(1.0, 63);
    Eigen::VectorXd prev = Eigen::VectorXd::Zero(g.n());
    bool ok = true;
    for (int m = 1; m <= 32; ++m) {
      const NoiseBasis b(m, 2.0, g);
      ok = ok && (b.phi().array() >= prev.array()).all();
      prev = b.phi();
    }
    return holds(ok, "phi_m <= phi_{m+1} at every node, m = 1..32");
  });

  // spde_sim -----------------------------------------------------------------

  add("spde_sim.stability_bound", [] {
    const Grid1D g(1.0, 31);
    SpdeParams p;
    p.mu = 0.1;
    p.dt = 1.01 * SpdeParams::max_stable_dt(p.mu, p.gamma, g);
    const bool rejected = throws<ParameterError>([&] { validate(p, g); });
    p.dt = SpdeParams::max_stable_dt(p.mu, p.gamma, g);
    const bool accepted = !throws<Error>([&] { validate(p, g); });
    return holds(rejected && accepted, "dt above the bound rejected, at the bound accepted");
  });

  // The refinement runs are shared by several entries below.
  auto ladder = std::make_shared<std::vector<PathRun>>();
  auto ladder_off = std::make_shared<std::vector<PathRun>>();
  auto on_runs = [opt, ladder]() -> const std::vector<PathRun>& {
    if (ladder->empty()) {
      const PathSetup s = default_setup(opt);
      for (int level : {2, 1, 0}) ladder->push_back(run_path(s, level, true));
    }
    return *ladder;
  };
  auto off_runs = [opt, ladder_off]() -> const std::vector<PathRun>& {
    if (ladder_off->empty()) {
      PathSetup s = default_setup(opt);
      s.projection = false;
      for (int level : {2, 1, 0}) ladder_off->push_back(run_path(s, level));
    }
    return *ladder_off;
  };

  add("spde_sim.energy_identity", [opt] {
    // A single path's drift carries a martingale part of size ~ sqrt(dt) with
    // a random sign, so the order is read off the mean over many fixed paths,
    // each refined on its own Brownian increments.
    const int paths = 256;
    const std::vector<int> levels{3, 2, 1, 0};
    std::vector<double> d(levels.size(), 0.0);
    std::vector<std::vector<double>> per_path(paths, std::vector<double>(levels.size()));
    std::atomic<int> next{0};
    auto worker = [&] {
      for (int k = next++; k < paths; k = next++) {
        PathSetup s = default_setup(opt);
        s.stream = derive_stream({opt.seed}, 100, k);
        for (std::size_t i = 0; i < levels.size(); ++i) per_path[k][i] = run_path(s, levels[i]).energy_drift;
      }
    };
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < std::max(1u, std::thread::hardware_concurrency()); ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    // Summed in path order so the result does not depend on scheduling.
    for (const auto& row : per_path) {
      for (std::size_t i = 0; i < levels.size(); ++i) d[i] += row[i] / paths;
    }
    // Least-squares slope of log drift against log dt.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double x = levels[i] * std::log(2.0), y = std::log(d[i]);
      sx += x, sy += y, sxx += x * x, sxy += x * y;
    }
    const double m = static_cast<double>(d.size());
    const double order = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    InvariantResult res;
    res.value = order;
    res.tolerance = 0.5;
    res.passed = std::isfinite(order) && order >= 0.5 && strictly_decreasing(d);
    res.detail = "mean relative drift over " + std::to_string(paths) +
                 " paths at dt = 8e-4 .. 1e-4: " + join(d) + "; fitted order " + fmt(order);
    return res;
  });

  add("spde_sim.tangent_bundle", [on_runs, off_runs] {
    std::vector<double> off;
    for (const PathRun& r : off_runs()) off.push_back(r.constraint);
    double on = 0.0;
    for (const PathRun& r : on_runs()) on = std::max(on, r.constraint);
    InvariantResult res = bound(on, 1e-12, "projection on: " + fmt(on) + "; off, dt halving: " + join(off));
    res.passed = on <= 1e-12 && strictly_decreasing(off);
    return res;
  });

  add("spde_sim.projection_sphere", [on_runs] {
    double worst = 0.0;
    for (const PathRun& r : on_runs()) worst = std::max(worst, r.sphere);
    return bound(worst, 1e-12, "max | |u|_H - 1 | with projection");
  });

  add("spde_sim.acc_v2_nondecreasing", [on_runs, off_runs] {
    bool ok = true;
    for (const PathRun& r : on_runs()) ok = ok && r.acc_v2_monotone;
    for (const PathRun& r : off_runs()) ok = ok && r.acc_v2_monotone;
    return holds(ok);
  });

  add("spde_sim.diagnostics_finite", [on_runs] {
    bool ok = true;
    for (const PathRun& r : on_runs()) ok = ok && r.finite;
    return holds(ok);
  });

  add("spde_sim.equilibrium", [opt] {
    PathSetup s = default_setup(opt);
    s.horizon = 0.05;
    s.projection = false;
    s.u0 = normalize_sphere(s.grid, sine_mode(s.grid, 2, 1));
    const PathRun r = run_path(s, 0);
    InvariantResult res = bound(r.step_change, 1e-12,
                                "per step " + fmt(r.step_change) + ", total " + fmt(r.total_change));
    res.passed = r.step_change <= 1e-12 && r.total_change <= 1e-10;
    return res;
  });

  add("spde_sim.noise_neutrality", [on_runs] {
    double worst = 0.0;
    for (const PathRun& r : on_runs()) worst = std::max(worst, r.neutrality);
    return bound(worst, 1e-13, "pointwise identity at every accepted step");
  });

  add("spde_sim.determinism", [opt] {
    PathSetup s = default_setup(opt);
    s.horizon = 0.02;
    const PathRun a = run_path(s, 0), b = run_path(s, 0);
    return holds(a.energies == b.energies, "two runs, same seed, bitwise equal energies");
  });

  // limit_pde ----------------------------------------------------------------

  add("limit_pde.stability_bound", [] {
    const Grid1D g(1.0, 31);
    const NoiseBasis b(8, 2.0, g);
    LimitParams p;
    const double dt = LimitParams::max_stable_dt(p.gamma, b.max_phi(), g, 1.0);
    p.dt = 1.01 * dt;
    p.safety = 1.0;
    const bool rejected = throws<ParameterError>([&] { (void)LimitSolver<double>(g, b, p); });
    p.dt = 0.0;
    const LimitSolver<double> auto_solver(g, b, p);
    return holds(rejected && auto_solver.schedule(1).first <= dt,
                 "requested dt above the bound rejected, automatic dt within it");
  });

  add("limit_pde.trajectory_sphere", [] {
    std::vector<double> res;
    for (int n : {31, 63}) {
      const Grid1D g(1.0, n);
      const NoiseBasis b(8, 2.0, g);
      LimitParams p;
      p.horizon = 0.25;
      const Field3 u0 = normalize_sphere(g, field_from_modes(g, {{1, 0, 1.0}, {2, 1, 0.5}, {3, 2, 0.3}}));
      double worst = 0.0;
      for (const LimitRow& row : limit_rows(g, solve_limit(g, u0, p, b, 64), p.gamma)) {
        worst = std::max(worst, row.sphere_residual);
      }
      res.push_back(worst);
    }
    InvariantResult r = bound(res.back(), 1e-3, "n = 31, 63: " + join(res));
    r.passed = r.passed && strictly_decreasing(res);
    return r;
  });

  add("limit_pde.formulation_equivalence", [=] {
    auto r = rng(10);
    const Grid1D g(1.0, 31);
    const NoiseBasis b(16, 2.0, g);
    LimitParams p;
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const Field3 u = normalize_sphere(g, random_smooth_field(r, g, 8));
      const double res = explicit_form_residual(g, u, limit_rhs(g, u, b, p), b, p);
      const double h2 = h2_seminorm(g, u);
      worst = std::max(worst, res / (1.0 + h2 * h2));
    }
    return bound(worst, 1e-10, "residual / (1 + |u|_{H^2}^2)");
  });

  add("limit_pde.mobility_inverse", [=] {
    auto r = rng(11);
    std::uniform_real_distribution<double> uphi(0.0, 10.0);
    double worst = 0.0;
    const int n = 64;
    for (int i = 0; i < 100; ++i) {
      const Field3 u = random_field(r, n), w = random_field(r, n);
      Eigen::VectorXd phi(n);
      for (int j = 0; j < n; ++j) phi(j) = uphi(r);
      const double gamma = 0.1 + 2.0 * uphi(r) / 10.0;
      const Field3 x = mobility_apply_inverse<double>(u, phi, gamma, w);
      for (int j = 0; j < n; ++j) {
        const Eigen::Matrix3d M = oracle::mobility_matrix(u.row(j).transpose(), phi(j), gamma);
        const Vec3 back = M * x.row(j).transpose();
        worst = std::max(worst, rel((back - w.row(j).transpose()).norm(),
                                    M.norm() * x.row(j).norm()));
      }
    }
    return bound(worst, 1e-13, "M (M^{-1} r) - r against the dense 3x3 matrix");
  });

  add("limit_pde.sphere_generator", [=] {
    auto r = rng(12);
    const Grid1D g(1.0, 31);
    const NoiseBasis b(16, 2.0, g);
    LimitParams p;
    p.gamma = 0.7;
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const Field3 u = (0.5 + 0.01 * i) * normalize_sphere(g, random_smooth_field(r, g, 8));
      const double h1 = h1_seminorm_sq(g, u);
      const double uu = inner_l2(g, u, u);
      const double lhs = inner_l2(g, u, limit_rhs(g, u, b, p));
      const double rhs = h1 * (uu - 1.0) / p.gamma;
      worst = std::max(worst, rel(std::abs(lhs - rhs), h1 * std::max(1.0, uu)));
    }
    return bound(worst, 1e-10, "<u, rhs(u)> vs |u|^2_{H^1} (|u|^2 - 1) / gamma");
  });

  add("limit_pde.energy_dissipation", [] {
    const Grid1D g(1.0, 31);
    const NoiseBasis b(8, 2.0, g);
    LimitParams p;
    p.horizon = 0.25;
    const Field3 u0 = normalize_sphere(g, field_from_modes(g, {{1, 0, 1.0}, {2, 1, 0.5}, {3, 2, 0.3}}));
    const LimitTrajectory tr = solve_limit(g, u0, p, b, 64);
    const double e0 = h1_seminorm_sq(g, tr.u.front());
    const double per_sample = static_cast<double>(tr.steps) / (tr.u.size() - 1);
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < tr.u.size(); ++k) {
      const double inc = h1_seminorm_sq(g, tr.u[k]) - h1_seminorm_sq(g, tr.u[k - 1]);
      worst = std::max(worst, inc / (e0 * per_sample));
    }
    return bound(worst, 1e-8, "largest increase of |u|^2_{H^1} per step / |u0|^2_{H^1}");
  });

  add("limit_pde.parabolic_consistency", [=] {
    auto r = rng(13);
    const Grid1D g(1.0, 31);
    const NoiseBasis none(0, 2.0, g);
    LimitParams a, c;
    c.parabolic = true;
    bool ok = true;
    for (int i = 0; i < 20; ++i) {
      const Field3 u = normalize_sphere(g, random_smooth_field(r, g, 8));
      ok = ok && limit_rhs(g, u, none, a) == limit_rhs(g, u, none, c);
    }
    return holds(ok, "phi = 0 basis vs parabolic flag, bitwise");
  });

  // convergence_lab ------------------------------------------------------------

  add("convergence_lab.config_ranges", [] {
    auto rejects = [](auto mutate) {
      StudyConfig c;
      mutate(c);
      return throws<ParameterError>([&] { validate(c); });
    };
    const bool ok = rejects([](StudyConfig& c) { c.delta = 2.0; }) &&
                    rejects([](StudyConfig& c) { c.mus = {0.1, 0.0}; }) &&
                    rejects([](StudyConfig& c) { c.mus = {1.5}; }) &&
                    rejects([](StudyConfig& c) { c.ensemble = 0; }) &&
                    !throws<Error>([] { validate(StudyConfig{}); });
    return holds(ok, "delta < 2, mu in (0,1], ensemble >= 1");
  });

  add("convergence_lab.seed_derivation", [] {
    StudyConfig c;
    c.ensemble = 64;
    c.mus = {0.2, 0.1, 0.05, 0.025, 0.0125};
    bool ok = true;
    for (bool crn : {false, true}) {
      c.common_random_numbers = crn;
      std::set<std::uint64_t> seen;
      std::size_t expected = 0;
      for (std::size_t i = 0; i < c.mus.size(); ++i) {
        for (int s = 0; s < c.ensemble; ++s) {
          const auto id = sample_stream(c, i, s).id;
          ok = ok && id == sample_stream(c, i, s).id;
          if (!crn || i == 0) {
            seen.insert(id);
            ++expected;
          }
        }
      }
      ok = ok && seen.size() == expected;
    }
    return holds(ok, "pure and collision-free over the configured grid");
  });

  auto tiny = std::make_shared<std::optional<StudyResult>>();
  auto tiny_study = [tiny]() -> const StudyResult& {
    if (!*tiny) {
      StudyConfig c;
      c.n = 31;
      c.modes = 8;
      c.horizon = 0.25;
      c.mus = {0.2, 0.1, 0.05};
      c.ensemble = 3;
      c.outputs = 16;
      c.dt_scale = 2e-3;
      c.threads = 1;
      *tiny = run_study(c);
    }
    return **tiny;
  };

  add("convergence_lab.error_nonnegative", [tiny_study] {
    const StudyResult& s = tiny_study();
    bool ok = true;
    for (const SampleRecord& r : s.samples) ok = ok && r.error >= 0.0 && r.error_alternate >= 0.0;
    for (std::size_t i = 0; i < s.levels.size(); ++i) {
      double mx = 0.0;
      for (const SampleRecord& r : s.samples) {
        if (r.mu_index == i) mx = std::max(mx, r.error);
      }
      ok = ok && std::abs(s.levels[i].mean_error) <= mx;
    }
    return holds(ok, "e >= 0 and |mean| <= max per level");
  });

  add("convergence_lab.statistics_recomputable", [tiny_study] {
    const StudyResult& s = tiny_study();
    const std::vector<LevelSummary> again = summarize(s.config, s.plan, s.samples);
    bool ok = again.size() == s.levels.size();
    for (std::size_t i = 0; ok && i < again.size(); ++i) {
      ok = again[i].mean_error == s.levels[i].mean_error &&
           again[i].std_error == s.levels[i].std_error &&
           again[i].failures == s.levels[i].failures &&
           again[i].remainder_max == s.levels[i].remainder_max &&
           again[i].max_energy_residual == s.levels[i].max_energy_residual;
    }
    return holds(ok, "summaries rebuilt from the sample rows match bitwise");
  });

  add("convergence_lab.remainder_monotone", [tiny_study] {
    const StudyResult& s = tiny_study();
    std::vector<double> r;
    double worst = 0.0;
    for (std::size_t i = 0; i < s.levels.size(); ++i) {
      r.push_back(s.levels[i].remainder_max);
      if (i) worst = std::max(worst, r[i] / r[i - 1]);
    }
    return bound(worst, 1.1, "max_i sup_t |J_i| per level: " + join(r));
  });

  add("convergence_lab.identity_refinement", [on_runs] {
    std::vector<double> r;
    for (const PathRun& p : on_runs()) r.push_back(p.identity_residual);
    const double order = std::log2(r[1] / r[2]);
    InvariantResult res = bound(r.back(), r.front(), "residual at T for dt halving: " + join(r) +
                                                         "; last order " + fmt(order));
    res.passed = strictly_decreasing(r);
    return res;
  });

  // cli_io -------------------------------------------------------------------

  add("cli_io.config_schema", [] {
    using nlohmann::json;
    auto rejects = [](const json& j) { return throws<ConfigError>([&] { parse_config(j); }); };
    const bool ok = rejects(json{{"grid", {{"L", 1.0}, {"nn", 31}}}}) &&
                    rejects(json{{"extra", 1}}) &&
                    rejects(json{{"physics", {{"gamma", 0.0}}}}) &&
                    rejects(json{{"study", {{"delta", 2.0}}}}) &&
                    rejects(json{{"noise", {{"p", 1.5}}}}) &&
                    rejects(json{{"grid", {{"n", "31"}}}}) &&
                    !throws<Error>([] { parse_config(json::object()); });
    return holds(ok, "unknown keys, wrong types and physical ranges rejected");
  });

  add("cli_io.manifest_reproduces", [] {
    RunConfig c;
    c.n = 15;
    c.modes = 4;
    c.mus = {0.1};
    c.horizon = 0.01;
    c.dt = 1e-4;
    c.stride = 7;
    RunManifest m;
    m.command = "simulate";
    m.config = c;
    const RunConfig back = parse_config(to_json(m));
    std::ostringstream a, b;
    write_simulation(c, a);
    write_simulation(back, b);
    const bool ok = config_hash(back) == config_hash(c) && to_json(back) == to_json(c) &&
                    a.str() == b.str();
    return holds(ok, "config -> manifest -> config, and byte-identical rerun");
  });

  add("cli_io.csv_round_trip", [=] {
    auto r = rng(14);
    std::uniform_int_distribution<std::uint64_t> bits;
    std::size_t bad = 0;
    std::vector<double> xs{0.0, -0.0, 1.0 / 3.0, 1e-310, std::numeric_limits<double>::max(),
                           std::numeric_limits<double>::denorm_min(), 0.1 + 0.2};
    for (int i = 0; i < 10000; ++i) {
      double x;
      const std::uint64_t w = bits(r);
      std::memcpy(&x, &w, sizeof x);
      if (std::isfinite(x)) xs.push_back(x);
    }
    for (double x : xs) {
      const double y = parse_double(format_double(x));
      if (std::memcmp(&x, &y, sizeof x) != 0) ++bad;
    }
    return bound(static_cast<double>(bad), 0.0, std::to_string(xs.size()) + " values, bitwise");
  });

  add("cli_io.exit_codes", [] {
    return holds(exit_success == 0 && exit_config_error == 1 && exit_numerical_failure == 2 &&
                     exit_acceptance_failure == 3,
                 "0 success, 1 config, 2 numerical, 3 acceptance");
  });

  return checks;
}

}  // namespace

std::vector<std::string> invariant_names() {
  std::vector<std::string> names;
  for (const Check& c : registry({})) names.emplace_back(c.name);
  return names;
}

std::vector<InvariantResult> run_invariants(const InvariantOptions& options) {
  std::vector<InvariantResult> out;
  for (const Check& c : registry(options)) {
    InvariantResult r;
    try {
      r = c.run();
    } catch (const std::exception& e) {
      r.passed = false;
      r.value = std::numeric_limits<double>::quiet_NaN();
      r.detail = std::string("exception: ") + e.what();
    }
    r.name = c.name;
    r.module = r.name.substr(0, r.name.find('.'));
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace sml
