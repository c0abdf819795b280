#pragma once

// Time integration of the constrained stochastic damped wave system in Ito form
//
//   du = v dt
//   mu dv = [A u + |u|_{H^1}^2 u - mu |v|_H^2 u - gamma v
//            + 1/2 mu^{2 alpha - 1} phi u x (u x v)] dt + mu^alpha (u x v) dw
//
// together with the conserved/monitored quantities of the continuous system.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <utility>

#include "sml/field_core.hpp"
#include "sml/noise_model.hpp"
#include "sml/tridiagonal.hpp"

namespace sml {

struct SpdeParams {
  double mu = 0.1;
  double gamma = 1.0;
  /// Noise prefactor mu^alpha in mu dv; alpha = 1/2 is the critical scaling.
  double alpha = 0.5;
  double dt = 1e-4;
  double horizon = 1.0;
  /// Renormalize u and tangent-project v after every step.
  bool projection = false;
  RngStream stream{};
  /// Multiplies the Ito correction term. Only for mutation tests; 1 otherwise.
  double correction_scale = 1.0;

  /// Coefficient of (u x v) dW in dv: mu^alpha / mu.
  double noise_coefficient() const;
  /// Coefficient of 1/2 phi u x (u x v) inside the bracket of mu dv.
  double correction_coefficient() const;

  /// Largest admissible step: min(0.5 sqrt(mu) h, 0.5 mu / gamma).
  static double max_stable_dt(double mu, double gamma, const Grid1D& grid);
};

/// Throws ParameterError unless mu in (0,1], gamma > 0, dt within the
/// stability bound and horizon > 0.
void validate(const SpdeParams& params, const Grid1D& grid);

struct State {
  Field3 u;
  Field3 v;
  double t = 0.0;
  /// int_0^t |v|_H^2 ds (trapezoid).
  double acc_v2 = 0.0;
  /// sum mu^alpha (u x v) Delta W: the stochastic integral of the remainder.
  Field3 acc_noise;
  std::size_t steps = 0;
};

/// State at t = 0 with all accumulators cleared.
State initial_state(const Grid1D& grid, const Field3& u0, const Field3& v0);

/// Normalizes u0 and projects v0 onto the tangent space at u0.
State tangent_initial_state(const Grid1D& grid, const Field3& u0, const Field3& v0);

struct Drift {
  Field3 du;
  Field3 dv;
};

Drift drift(const Grid1D& grid, const Field3& u, const Field3& v, const SpdeParams& params,
            const NoiseBasis& basis);

/// Semi-implicit Euler-Maruyama stepper. The linear stiff part (A_h/mu and
/// gamma/mu) is implicit through one tridiagonal solve per component.
class SpdeStepper {
 public:
  SpdeStepper(const Grid1D& grid, const NoiseBasis& basis, SpdeParams params);

  const SpdeParams& params() const noexcept { return params_; }
  const Grid1D& grid() const noexcept { return grid_; }
  const NoiseBasis& basis() const noexcept { return *basis_; }

  /// Number of steps covering the horizon (T / dt rounded to nearest).
  std::size_t step_count() const;

  State step(const State& state, const WienerIncrement& dW) const;

 private:
  Grid1D grid_;
  const NoiseBasis* basis_;
  SpdeParams params_;
  TridiagonalSolver<double> solver_;
};

/// Supplies the increment for step k.
using IncrementSource = std::function<WienerIncrement(std::uint64_t step)>;

/// Fresh draws from params.stream at the stepper's dt.
IncrementSource stream_increments(const SpdeStepper& stepper);

/// Observer called after each step with the states before and after it.
using StepObserver =
    std::function<void(const State& before, const State& after, const WienerIncrement& dW)>;

/// Advances `steps` steps; every state is checked for finiteness.
State run_steps(const SpdeStepper& stepper, State state, std::size_t steps,
                const IncrementSource& increments, const StepObserver& observer = {});

// Diagnostics ---------------------------------------------------------------

/// |u|^2_{H^1} + mu |v|^2_H + 2 gamma int_0^t |v|^2_H ds.
double energy(const Grid1D& grid, const State& state, const SpdeParams& params);

struct ConstraintResiduals {
  double theta = 0.0;  // (|u|_H^2 - 1) / 2
  double eta = 0.0;    // <u, v>_H
};

ConstraintResiduals constraint_residuals(const Grid1D& grid, const State& state);

/// exp(-a int|v|^2) (|u|^2_{H^2} + mu |v|^2_{H^1} + mu |u|^2_{H^1} |v|^2_H).
double weighted_h2_energy(const Grid1D& grid, const State& state, const SpdeParams& params,
                          double a);

/// Expanded form of J(u,v) = <v, tr_K(u x (u x v))>_{H^1} + ||u x v||^2_{T2(K,H^1)}:
///   int |u x v|^2 phi1 + 2 int ((u x v).(Du x v)) sum xi xi'
///   + int [|Du x v|^2 - (Du x u).(Dv x v)] phi.
/// Derivatives are those of the sine interpolants, quadrature is the
/// trapezoid rule on the closed grid.
double functional_J(const SineTransform<double>& transform, const Field3& u, const Field3& v,
                    const NoiseBasis& basis);

/// sum_i |<v, (u x v) xi_i>_{H^1}|^2.
double functional_G_norm(const SineTransform<double>& transform, const Field3& u,
                         const Field3& v, const NoiseBasis& basis);

struct StepDiagnostics {
  double t = 0.0;
  double energy = 0.0;
  double theta = 0.0;
  double eta = 0.0;
  double u_h1 = 0.0;
  double u_h2 = 0.0;
  double v_h = 0.0;
  double v_h1 = 0.0;
  double weighted_h2 = 0.0;
};

StepDiagnostics diagnose(const Grid1D& grid, const State& state, const SpdeParams& params,
                         double weight_a);

/// True when every value of the diagnostics row is finite.
bool all_finite(const StepDiagnostics& row);

namespace detail {

/// Field values on the closed grid (boundary rows zero).
Field3 pad_closed(const Field3& f);
/// Trapezoid weights for the closed grid.
Eigen::VectorXd closed_weights(const Grid1D& grid);
/// xi_i and xi_i' at the closed-grid nodes (columns i-1).
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> closed_basis(const NoiseBasis& basis);

}  // namespace detail

}  // namespace sml
