#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "sml/convergence_lab.hpp"
#include "sml/errors.hpp"
#include "sml/oracles.hpp"
#include "sml/spde_sim.hpp"

using namespace sml;

namespace {

Field3 smooth_field(std::mt19937_64& rng, const Grid1D& g, int modes) {
  std::normal_distribution<double> n;
  Field3 f = Field3::Zero(g.n(), 3);
  for (int k = 1; k <= modes; ++k) {
    for (int d = 0; d < 3; ++d) f += sine_mode(g, k, d, n(rng) / k);
  }
  return f;
}

Field3 default_datum(const Grid1D& g) {
  return normalize_sphere(g, field_from_modes(g, {{1, 0, 1.0}, {2, 1, 0.5}, {3, 2, 0.3}}));
}

}  // namespace

TEST_CASE("drift") {
  const Grid1D g(1.0, 63);
  const NoiseBasis b(16, 2.0, g);
  SpdeParams p;
  p.mu = 0.2;
  p.gamma = 1.3;

  SUBCASE("eigenfield at rest is an equilibrium") {
    const Field3 u = normalize_sphere(g, sine_mode(g, 3, 1));
    const Drift d = drift(g, u, zero_field(g), p, b);
    CHECK(d.du.isZero());
    CHECK(d.dv.cwiseAbs().maxCoeff() <= 1e-12 * g.eigenvalue(3));
  }

  SUBCASE("velocity parallel to u") {
    const Field3 u = default_datum(g);
    const double lambda = 0.8;
    const Drift d = drift(g, u, Field3(lambda * u), p, b);
    const Field3 expected = (laplacian(g, u) + (h1_seminorm_sq(g, u) - p.mu * lambda * lambda) * u -
                             p.gamma * lambda * u) / p.mu;
    CHECK((d.dv - expected).norm() <= 1e-12 * expected.norm());
    CHECK((d.du - lambda * u).norm() == 0.0);
  }

  SUBCASE("mu dv at v = 0 is the harmonic-map force") {
    const Field3 u = default_datum(g);
    const Drift d = drift(g, u, zero_field(g), p, b);
    const Field3 force = laplacian(g, u) + h1_seminorm_sq(g, u) * u;
    CHECK((p.mu * d.dv - force).norm() <= 1e-12 * force.norm());
  }
}

TEST_CASE("noise and correction coefficients") {
  SpdeParams p;
  p.mu = 0.04;
  p.alpha = 0.5;
  CHECK(p.noise_coefficient() == doctest::Approx(5.0));
  CHECK(p.correction_coefficient() == doctest::Approx(1.0));
  p.alpha = 1.0;
  CHECK(p.noise_coefficient() == doctest::Approx(1.0));
  CHECK(p.correction_coefficient() == doctest::Approx(0.04));
}

TEST_CASE("parameter validation") {
  const Grid1D g(1.0, 127);
  SpdeParams p;
  p.mu = 0.05;
  p.dt = SpdeParams::max_stable_dt(p.mu, p.gamma, g);
  CHECK(p.dt == doctest::Approx(std::min(0.5 * std::sqrt(0.05) * g.h(), 0.025)));
  CHECK_NOTHROW(validate(p, g));
  p.dt *= 1.5;
  CHECK_THROWS_AS(validate(p, g), ParameterError);
  p.dt = 1e-5;
  p.mu = 0.0;
  CHECK_THROWS_AS(validate(p, g), ParameterError);
  p.mu = 1.2;
  CHECK_THROWS_AS(validate(p, g), ParameterError);
  p.mu = 0.1;
  p.gamma = 0.0;
  CHECK_THROWS_AS(validate(p, g), ParameterError);
}

TEST_CASE("stepper equilibrium under noise") {
  const Grid1D g(1.0, 63);
  const NoiseBasis b(16, 2.0, g);
  SpdeParams p;
  p.mu = 0.1;
  p.dt = 1e-4;
  p.stream = {3};
  const SpdeStepper st(g, b, p);
  const Field3 u0 = normalize_sphere(g, sine_mode(g, 2, 0));
  State s = initial_state(g, u0, zero_field(g));
  const double e0 = energy(g, s, p);
  const IncrementSource inc = stream_increments(st);
  for (std::size_t k = 0; k < 500; ++k) {
    const State next = st.step(s, inc(k));
    CHECK((next.u - s.u).cwiseAbs().maxCoeff() <= 1e-12);
    s = next;
  }
  CHECK((s.u - u0).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(std::abs(energy(g, s, p) - e0) <= 1e-12 * e0);
  CHECK(s.acc_noise.isZero());
}

TEST_CASE("strong convergence on a fixed path") {
  const Grid1D g(1.0, 31);
  const NoiseBasis b(8, 2.0, g);
  const Field3 u0 = default_datum(g);
  const double fine = 2.5e-5;
  auto run = [&](int level, std::uint64_t seed) {
    SpdeParams p;
    p.mu = 0.1;
    p.dt = fine * std::ldexp(1.0, level);
    p.horizon = 0.1;
    p.projection = true;
    p.stream = {seed};
    const SpdeStepper st(g, b, p);
    const IncrementSource inc = [&](std::uint64_t k) { return coarse_increment(b, fine, p.stream, k, level); };
    return run_steps(st, initial_state(g, u0, zero_field(g)), st.step_count(), inc).u;
  };
  std::vector<double> err(3, 0.0);
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const Field3 ref = run(0, seed);
    for (int level = 3; level >= 1; --level) err[3 - level] += std::sqrt(h1_seminorm_sq(g, Field3(run(level, seed) - ref)));
  }
  CHECK(err[1] < err[0]);
  CHECK(err[2] < err[1]);
}

TEST_CASE("overdamped deterministic velocity decays after the transient") {
  const Grid1D g(1.0, 31);
  const NoiseBasis none(0, 2.0, g);
  SpdeParams p;
  p.mu = 0.1;
  p.gamma = 20.0;
  p.dt = 1e-4;
  p.horizon = 0.5;
  const SpdeStepper st(g, none, p);
  std::vector<double> vh;
  run_steps(st, initial_state(g, default_datum(g), zero_field(g)), st.step_count(), stream_increments(st),
            [&](const State&, const State& after, const WienerIncrement&) { vh.push_back(norm_l2(g, after.v)); });
  const auto peak = std::max_element(vh.begin(), vh.end()) - vh.begin();
  CHECK(peak < static_cast<long>(vh.size()) / 10);
  for (std::size_t k = peak + 1; k < vh.size(); ++k) REQUIRE(vh[k] <= vh[k - 1]);
}

TEST_CASE("energy, constraints and weighted energy") {
  const Grid1D g(1.0, 63);
  std::mt19937_64 rng(21);
  SpdeParams p;
  p.mu = 0.3;
  const Field3 u = default_datum(g);
  const Field3 v = project_tangent(g, u, smooth_field(rng, g, 4));
  const State s = initial_state(g, u, v);
  CHECK(energy(g, s, p) == h1_seminorm_sq(g, u) + p.mu * inner_l2(g, v, v));

  const ConstraintResiduals c = constraint_residuals(g, s);
  CHECK(std::abs(c.theta) <= 1e-14);
  CHECK(std::abs(c.eta) <= 1e-14);
  const State scaled = initial_state(g, Field3(std::sqrt(3.0) * u), v);
  CHECK(constraint_residuals(g, scaled).theta == doctest::Approx(1.0).epsilon(1e-14));

  const double h2 = h2_seminorm(g, u);
  const double expected = h2 * h2 + p.mu * h1_seminorm_sq(g, v) + p.mu * h1_seminorm_sq(g, u) * inner_l2(g, v, v);
  CHECK(weighted_h2_energy(g, s, p, 0.0) == doctest::Approx(expected).epsilon(1e-13));
  CHECK_THROWS_AS(weighted_h2_energy(g, s, p, -1.0), ParameterError);

  State rest = initial_state(g, u, zero_field(g));
  const double w0 = weighted_h2_energy(g, rest, p, 10.0);
  rest.t = 0.7;
  CHECK(weighted_h2_energy(g, rest, p, 10.0) == w0);
}

TEST_CASE("J functional: expanded form against the definition") {
  const Grid1D g(1.0, 63);
  const SineTransform<double> t(g);
  const NoiseBasis b(16, 2.0, g);
  std::mt19937_64 rng(22);
  for (int i = 0; i < 10; ++i) {
    const Field3 u = smooth_field(rng, g, 6), v = smooth_field(rng, g, 6);
    const double def = oracle::functional_J_definition(t, u, v, b);
    CHECK(std::abs(functional_J(t, u, v, b) - def) <= 1e-10 * std::abs(def));
  }
  const Field3 u = smooth_field(rng, g, 6);
  const Field3 v = 1.7 * u;
  const double def = oracle::functional_J_definition(t, u, v, b);
  CHECK(std::abs(functional_J(t, u, v, b) - def) <= 1e-10 * (1 + std::abs(def)));
  CHECK(functional_G_norm(t, u, v, b) <= 1e-24 * std::pow(u.squaredNorm(), 4));
  CHECK(functional_J(t, u, v, NoiseBasis(0, 2.0, g)) == 0.0);
}

TEST_CASE("blow-up carries the step index") {
  const Grid1D g(1.0, 15);
  const NoiseBasis b(4, 2.0, g);
  SpdeParams p;
  p.dt = 1e-4;
  const SpdeStepper st(g, b, p);
  Field3 u = default_datum(g);
  u(3, 1) = std::numeric_limits<double>::quiet_NaN();
  State s = initial_state(g, u, zero_field(g));
  s.steps = 41;
  try {
    st.step(s, sample_increment(b, p.dt, {}, 0));
    FAIL("no blow-up reported");
  } catch (const BlowUpError& e) {
    CHECK(e.step() == 42);
  }
}

TEST_CASE("identical seeds give identical trajectories") {
  const Grid1D g(1.0, 31);
  const NoiseBasis b(8, 2.0, g);
  SpdeParams p;
  p.dt = 1e-4;
  p.horizon = 0.02;
  p.stream = {77};
  const SpdeStepper st(g, b, p);
  const State s0 = initial_state(g, default_datum(g), zero_field(g));
  const State a = run_steps(st, s0, st.step_count(), stream_increments(st));
  const State c = run_steps(st, s0, st.step_count(), stream_increments(st));
  CHECK(a.u == c.u);
  CHECK(a.v == c.v);
  CHECK(a.acc_v2 == c.acc_v2);
  p.stream = {78};
  const SpdeStepper other(g, b, p);
  CHECK(run_steps(other, s0, other.step_count(), stream_increments(other)).u != a.u);
}
