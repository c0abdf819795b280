#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "sml/errors.hpp"
#include "sml/field_core.hpp"
#include "sml/oracles.hpp"

using namespace sml;
using std::numbers::pi;

namespace {

Field3 random_field(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> g;
  Field3 f(n, 3);
  for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = g(rng);
  return f;
}

// Dense Dirichlet second-difference matrix, built entry by entry.
Eigen::MatrixXd dense_laplacian(const Grid1D& g) {
  const int n = g.n();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    A(i, i) = -2.0;
    if (i > 0) A(i, i - 1) = 1.0;
    if (i + 1 < n) A(i, i + 1) = 1.0;
  }
  return A / (g.h() * g.h());
}

}  // namespace

TEST_CASE("grid geometry") {
  const Grid1D g(2.0, 63);
  CHECK(g.h() == doctest::Approx(2.0 / 64).epsilon(1e-15));
  CHECK(g.x(0) == doctest::Approx(g.h()));
  CHECK(g.x(62) < 2.0);
  CHECK_THROWS_AS(Grid1D(0.0, 10), ParameterError);
  CHECK_THROWS_AS(Grid1D(1.0, 1), ParameterError);
  CHECK_THROWS_AS(Grid1D(std::nan(""), 10), ParameterError);
}

TEST_CASE("inner_l2 basics") {
  const Grid1D g(1.0, 63);
  const Field3 z = zero_field(g);
  CHECK(inner_l2(g, z, z) == 0.0);

  Field3 f = zero_field(g), w = zero_field(g);
  f.col(0).setRandom();
  w.col(1).setRandom();
  CHECK(inner_l2(g, f, w) == 0.0);

  CHECK_THROWS_AS(inner_l2(g, Field3(62, 3), Field3(62, 3)), ShapeError);
}

TEST_CASE("normalized first mode has unit L2 norm") {
  for (double L : {1.0, 2.5}) {
    const Grid1D g(L, 63);
    const Field3 f = sine_mode(g, 1, 0, std::sqrt(2.0 / L));
    // High-resolution Simpson value of int (2/L) sin^2(pi x / L).
    const double exact =
        oracle::simpson([L](double x) { return 2.0 / L * std::pow(std::sin(pi * x / L), 2); }, 0.0, L, 4096);
    CHECK(exact == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(inner_l2(g, f, f) - exact) <= g.h() * g.h());
  }
}

TEST_CASE("laplacian") {
  const Grid1D g(1.0, 31);
  CHECK(laplacian(g, zero_field(g)).norm() == 0.0);

  SUBCASE("sine vectors are eigenvectors, checked against the dense matrix") {
    const Eigen::MatrixXd A = dense_laplacian(g);
    for (int k : {1, 2, 7, 31}) {
      const Field3 s = sine_mode(g, k, 0);
      const Eigen::VectorXd direct = A * s.col(0);
      CHECK((laplacian(g, s).col(0) - direct).norm() <= 1e-9 * direct.norm());
      CHECK((direct + g.eigenvalue(k) * s.col(0)).norm() <= 1e-12 * g.eigenvalue(k) * s.norm());
      CHECK(g.eigenvalue(k) == doctest::Approx(2.0 / (g.h() * g.h()) * (1.0 - std::cos(k * pi * g.h()))));
    }
  }

  SUBCASE("affine data only feels the boundary at the end nodes") {
    Field3 f(g.n(), 3);
    for (int j = 0; j < g.n(); ++j) f.row(j).setConstant(g.x(j) + 1.0);
    const Field3 lap = laplacian(g, f);
    const double h2 = g.h() * g.h();
    for (int j = 1; j + 1 < g.n(); ++j) CHECK(std::abs(lap(j, 0)) * h2 <= 1e-14);
    CHECK(lap(0, 0) * h2 == doctest::Approx(-1.0));
    CHECK(lap(g.n() - 1, 2) * h2 == doctest::Approx(-(g.length() + 1.0)));
  }
}

TEST_CASE("h1 seminorm") {
  const Grid1D g(1.0, 127);
  CHECK(h1_seminorm_sq(g, zero_field(g)) == 0.0);
  const Field3 f = sine_mode(g, 3, 0, 0.7);
  CHECK(h1_seminorm_sq(g, f) == doctest::Approx(g.eigenvalue(3) * inner_l2(g, f, f)).epsilon(1e-13));

  // Normalized first mode: (pi/L)^2 up to the O(h^2) eigenvalue defect.
  const Field3 u = sine_mode(g, 1, 0, std::sqrt(2.0));
  CHECK(std::abs(h1_seminorm_sq(g, u) - pi * pi) <= std::pow(pi, 4) * g.h() * g.h() / 12.0 * 1.01);
}

TEST_CASE("sobolev norm") {
  const Grid1D g(1.0, 63);
  const SineTransform<double> t(g);
  CHECK(sobolev_norm(t, sine_mode(g, 5, 2, 1.0 / std::sqrt(0.5)), 0.0) == doctest::Approx(1.0).epsilon(1e-13));
  const Field3 f = sine_mode(g, 4, 0, 0.3);
  CHECK(sobolev_norm(t, f, 1.0) == doctest::Approx(std::sqrt(h1_seminorm_sq(g, f))).epsilon(1e-10));
  CHECK(sobolev_norm(t, f, 2.0) == doctest::Approx(h2_seminorm(g, f)).epsilon(1e-10));
  for (double d : {0.0, 0.5, 1.5, 2.0}) CHECK(sobolev_norm(t, zero_field(g), d) == 0.0);
  CHECK_THROWS_AS(sobolev_norm(t, f, -0.1), ParameterError);
  CHECK_THROWS_AS(sobolev_norm(t, f, 2.5), ParameterError);

  // Interpolates monotonically between the integer orders for a fixed field.
  std::mt19937_64 rng(3);
  const Field3 r = random_field(rng, g.n());
  CHECK(sobolev_norm(t, r, 0.5) < sobolev_norm(t, r, 1.0));
  CHECK(sobolev_norm(t, r, 0.5) > sobolev_norm(t, r, 0.0));
}

TEST_CASE("sine transform round trip") {
  const Grid1D g(1.0, 63);
  const SineTransform<double> t(g);
  std::mt19937_64 rng(1);
  const Field3 f = random_field(rng, g.n());
  CHECK((t.inverse(t.forward(f)) - f).norm() <= 1e-12 * f.norm());
  const SineTransform<long double> tl(g);
  const Field3T<long double> fl = f.cast<long double>();
  CHECK(static_cast<double>((tl.inverse(tl.forward(fl)) - fl).norm()) <= 1e-15 * f.norm());
}

TEST_CASE("triple cross product") {
  CHECK(triple_cross(Vec3(1, 0, 0), Vec3(0, 1, 0)).isApprox(Vec3(0, -1, 0)));
  const Vec3 h(0.3, -1.2, 2.0);
  CHECK(triple_cross(h, Vec3(2.5 * h)).norm() <= 1e-14);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  for (int i = 0; i < 200; ++i) {
    const Vec3 a(n(rng), n(rng), n(rng)), b(n(rng), n(rng), n(rng));
    CHECK((triple_cross(a, b) - oracle::double_cross(a, b)).cwiseAbs().maxCoeff() <= 1e-14 * (1 + a.squaredNorm() * b.norm()));
  }
}

TEST_CASE("project_tangent") {
  const Grid1D g(1.0, 63);
  std::mt19937_64 rng(4);
  const Field3 u = random_field(rng, g.n());
  CHECK(project_tangent(g, u, u).norm() <= 1e-13 * u.norm());

  const Field3 w = oracle::gram_schmidt(u, random_field(rng, g.n()));
  CHECK((project_tangent(g, u, w) - w).norm() <= 1e-12 * w.norm());
  CHECK((project_tangent(g, u, Field3(u + w)) - w).norm() <= 1e-12 * w.norm());
  CHECK_THROWS_AS(project_tangent(g, zero_field(g), w), DegenerateInputError);
}

TEST_CASE("normalize_sphere") {
  const Grid1D g(1.0, 63);
  std::mt19937_64 rng(5);
  const Field3 u = normalize_sphere(g, random_field(rng, g.n()));
  CHECK(std::abs(norm_l2(g, u) - 1.0) <= 1e-14);
  CHECK((normalize_sphere(g, u) - u).norm() <= 1e-14 * u.norm());
  CHECK((normalize_sphere(g, Field3(7.0 * u)) - u).norm() <= 1e-14 * u.norm());
  const Field3 s = normalize_sphere(g, sine_mode(g, 1, 0));
  CHECK((s - sine_mode(g, 1, 0, std::sqrt(2.0))).norm() <= 1e-13);
  CHECK_THROWS_AS(normalize_sphere(g, zero_field(g)), DegenerateInputError);
}
