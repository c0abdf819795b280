#pragma once

// Deterministic small-mass limit
//
//   gamma d_t u = A u + |u|_{H^1}^2 u + 1/2 phi u x (u x d_t u),
//
// solved pointwise for d_t u through the closed-form inverse of the mobility
// M(u) = (gamma + phi/2 |u|^2) I - phi/2 u u^T, and integrated by classical RK4.
// The product-rule form
//
//   d_t[(gamma + phi/2 |u|^2) u] = A u + |u|_{H^1}^2 u + 3 phi/(2 gamma) ((A u + |u|_{H^1}^2 u).u) u
//
// is kept as a residual check. In parabolic mode every phi term is dropped.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <vector>

#include "sml/field_core.hpp"
#include "sml/noise_model.hpp"

namespace sml {

template <typename Scalar>
using VectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

struct LimitParams {
  double gamma = 1.0;
  /// Requested step; 0 selects the largest admissible one.
  double dt = 0.0;
  double horizon = 1.0;
  /// Drop all phi terms: gamma d_t u = A u + |u|_{H^1}^2 u.
  bool parabolic = false;
  /// Safety factor theta in (0, 1] of the stability bound.
  double safety = 0.9;
  /// Renormalize u after every step. Off by default: the sphere residual is a diagnostic.
  bool renormalize = false;

  /// theta h^2 min(gamma/2, gamma / (2 (gamma + max phi / 2))).
  static double max_stable_dt(double gamma, double max_phi, const Grid1D& grid, double safety);
};

/// Throws ParameterError on gamma <= 0, horizon <= 0, safety outside (0,1]
/// or a requested dt above the stability bound.
void validate(const LimitParams& params, const Grid1D& grid, const NoiseBasis& basis);

/// Pointwise M(u) w = gamma w + phi/2 (|u|^2 w - (u.w) u).
template <typename Scalar>
Field3T<Scalar> mobility_apply(const Field3T<Scalar>& u, const VectorT<Scalar>& phi, Scalar gamma,
                               const Field3T<Scalar>& w) {
  if (u.rows() != w.rows() || u.rows() != phi.size()) throw ShapeError("mobility_apply: size mismatch");
  const VectorT<Scalar> half = Scalar(0.5) * phi;
  const VectorT<Scalar> uu = u.rowwise().squaredNorm();
  const VectorT<Scalar> uw = dot_rows(u, w);
  Field3T<Scalar> out = w.array().colwise() * (gamma + half.array() * uu.array());
  out.array() -= u.array().colwise() * (half.array() * uw.array());
  return out;
}

/// Pointwise M(u)^{-1} r = (r + phi/(2 gamma) (u.r) u) / (gamma + phi/2 |u|^2).
template <typename Scalar>
Field3T<Scalar> mobility_apply_inverse(const Field3T<Scalar>& u, const VectorT<Scalar>& phi,
                                       Scalar gamma, const Field3T<Scalar>& r) {
  if (u.rows() != r.rows() || u.rows() != phi.size()) {
    throw ShapeError("mobility_apply_inverse: size mismatch");
  }
  if (!(gamma > Scalar(0))) throw ParameterError("mobility_apply_inverse: gamma must be positive");
  const VectorT<Scalar> uu = u.rowwise().squaredNorm();
  const VectorT<Scalar> ur = dot_rows(u, r);
  const VectorT<Scalar> a = (gamma + Scalar(0.5) * phi.array() * uu.array()).matrix();
  Field3T<Scalar> out = r + Field3T<Scalar>(u.array().colwise() *
                                            (phi.array() * ur.array() / (Scalar(2) * gamma)));
  out.array().colwise() /= a.array();
  return out;
}

/// A_h u + |u|^2_{H^1} u.
template <typename Derived>
Field3T<typename Derived::Scalar> harmonic_map_force(const Grid1D& grid,
                                                     const Eigen::MatrixBase<Derived>& u) {
  return laplacian(grid, u) + h1_seminorm_sq(grid, u) * u;
}

/// Right-hand side of the limit ODE for a given kernel phi (phi = 0 in parabolic mode).
template <typename Scalar>
Field3T<Scalar> limit_rhs(const Grid1D& grid, const Field3T<Scalar>& u, const VectorT<Scalar>& phi,
                          const LimitParams& params) {
  detail::check_shape(grid, u, "limit_rhs");
  if (!(u.squaredNorm() > Scalar(0))) throw DegenerateInputError("limit_rhs: zero field");
  const Scalar gamma = static_cast<Scalar>(params.gamma);
  Field3T<Scalar> force = harmonic_map_force(grid, u);
  if (params.parabolic) return force / gamma;
  return mobility_apply_inverse(u, phi, gamma, force);
}

Field3 limit_rhs(const Grid1D& grid, const Field3& u, const NoiseBasis& basis,
                 const LimitParams& params);

/// |LHS - RHS|_H of the product-rule form, with d_t u taken from ut.
template <typename Scalar>
Scalar explicit_form_residual(const Grid1D& grid, const Field3T<Scalar>& u,
                              const Field3T<Scalar>& ut, const VectorT<Scalar>& phi,
                              const LimitParams& params) {
  detail::check_shape(grid, u, "explicit_form_residual");
  detail::check_shape(grid, ut, "explicit_form_residual");
  const Scalar gamma = static_cast<Scalar>(params.gamma);
  const VectorT<Scalar> kernel = params.parabolic ? VectorT<Scalar>::Zero(u.rows()) : phi;
  const VectorT<Scalar> uu = u.rowwise().squaredNorm();
  const VectorT<Scalar> uut = dot_rows(u, ut);
  const Field3T<Scalar> force = harmonic_map_force(grid, u);
  const VectorT<Scalar> fu = dot_rows(force, u);

  Field3T<Scalar> lhs = ut.array().colwise() * (gamma + Scalar(0.5) * kernel.array() * uu.array());
  lhs.array() += u.array().colwise() * (kernel.array() * uut.array());
  Field3T<Scalar> rhs = force;
  rhs.array() += u.array().colwise() * (Scalar(1.5) / gamma * kernel.array() * fu.array());
  return norm_l2(grid, lhs - rhs);
}

double explicit_form_residual(const Grid1D& grid, const Field3& u, const Field3& ut,
                              const NoiseBasis& basis, const LimitParams& params);

/// Normalizes u0 onto the unit sphere of H and rejects it when |A_h u|_H
/// exceeds h2_cap.
Field3 repair_initial_datum(const Grid1D& grid, const Field3& u0, double h2_cap);

/// Fixed-step RK4 integrator for the limit ODE in precision Scalar.
template <typename Scalar = double>
class LimitSolver {
 public:
  using Field = Field3T<Scalar>;

  LimitSolver(const Grid1D& grid, const NoiseBasis& basis, LimitParams params);

  const Grid1D& grid() const noexcept { return grid_; }
  const LimitParams& params() const noexcept { return params_; }
  const VectorT<Scalar>& phi() const noexcept { return phi_; }

  Field rhs(const Field& u) const { return limit_rhs(grid_, u, phi_, params_); }

  /// One RK4 step of size dt.
  Field step(const Field& u, Scalar dt) const { return step(u, rhs(u), dt); }
  /// One RK4 step reusing a precomputed k1 = rhs(u).
  Field step(const Field& u, const Field& k1, Scalar dt) const;

  /// Step size and count covering the horizon with `segments` equal output
  /// intervals; dt never exceeds the admissible (or requested) step.
  std::pair<double, std::size_t> schedule(std::size_t segments) const;

 private:
  Grid1D grid_;
  LimitParams params_;
  VectorT<Scalar> phi_;
  double dt_max_;
};

struct LimitTrajectory {
  double dt = 0.0;
  std::size_t steps = 0;
  std::vector<double> t;
  std::vector<Field3> u;
  std::vector<Field3> ut;
  /// int_0^t |d_t u|_H^2 ds (trapezoid over every step).
  std::vector<double> dissipation;
};

/// Integrates from u0 (used as given; see repair_initial_datum) and records
/// segments + 1 equally spaced samples including t = 0 and t = T.
template <typename Scalar = double>
LimitTrajectory solve_limit(const Grid1D& grid, const Field3& u0, const LimitParams& params,
                            const NoiseBasis& basis, std::size_t segments = 256);

struct LimitRow {
  double t = 0.0;
  double u_h1 = 0.0;
  double u_h2 = 0.0;
  double ut_h = 0.0;
  /// | |u|_H - 1 |.
  double sphere_residual = 0.0;
  /// |u|^2_{H^1} + 2 gamma int |d_t u|^2.
  double energy_lhs = 0.0;
  /// |u0|^2_{H^1}.
  double energy_rhs = 0.0;
};

std::vector<LimitRow> limit_rows(const Grid1D& grid, const LimitTrajectory& trajectory,
                                 double gamma);

struct ComparisonPoint {
  double t = 0.0;
  double distance_h1_sq = 0.0;
  double dissipation_gap = 0.0;  // int_0^t |d_t u1 - d_t u2|_H^2
  double lhs() const noexcept { return distance_h1_sq + dissipation_gap; }
};

struct ComparisonResult {
  std::vector<ComparisonPoint> series;
  double initial_distance_sq = 0.0;  // |u1(0) - u2(0)|^2_{H^1}
  /// Least-squares fit log(lhs / initial) = log c1 + c2 t.
  double c1 = 0.0;
  double c2 = 0.0;
};

/// Runs both trajectories in lockstep and fits the stability bound.
template <typename Scalar = double>
ComparisonResult comparison_experiment(const Grid1D& grid, const Field3& u10, const Field3& u20,
                                       const LimitParams& params, const NoiseBasis& basis,
                                       std::size_t segments = 256);

extern template class LimitSolver<double>;
extern template class LimitSolver<long double>;

}  // namespace sml
