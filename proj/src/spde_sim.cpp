#include "sml/spde_sim.hpp"

#include <cmath>
#include <string>

namespace sml {

double SpdeParams::noise_coefficient() const { return std::pow(mu, alpha) / mu; }

double SpdeParams::correction_coefficient() const {
  return correction_scale * std::pow(mu, 2.0 * alpha - 1.0);
}

double SpdeParams::max_stable_dt(double mu, double gamma, const Grid1D& grid) {
  return std::min(0.5 * std::sqrt(mu) * grid.h(), 0.5 * mu / gamma);
}

void validate(const SpdeParams& params, const Grid1D& grid) {
  if (!(params.mu > 0.0 && params.mu <= 1.0)) {
    throw ParameterError("mu must lie in (0, 1], got " + std::to_string(params.mu));
  }
  if (!(params.gamma > 0.0)) throw ParameterError("gamma must be positive");
  if (!(params.dt > 0.0)) throw ParameterError("dt must be positive");
  if (!(params.horizon > 0.0)) throw ParameterError("horizon must be positive");
  if (!std::isfinite(params.alpha)) throw ParameterError("alpha must be finite");
  const double bound = SpdeParams::max_stable_dt(params.mu, params.gamma, grid);
  // Relative slack so that a dt computed as exactly the bound is accepted.
  if (params.dt > bound * (1.0 + 1e-12)) {
    throw ParameterError("dt = " + std::to_string(params.dt) +
                         " violates the stability bound min(0.5 sqrt(mu) h, 0.5 mu/gamma) = " +
                         std::to_string(bound));
  }
}

State initial_state(const Grid1D& grid, const Field3& u0, const Field3& v0) {
  detail::check_shape(grid, u0, "initial_state");
  detail::check_shape(grid, v0, "initial_state");
  State s;
  s.u = u0;
  s.v = v0;
  s.acc_noise = Field3::Zero(grid.n(), 3);
  return s;
}

State tangent_initial_state(const Grid1D& grid, const Field3& u0, const Field3& v0) {
  Field3 u = normalize_sphere(grid, u0);
  Field3 v = project_tangent(grid, u, v0);
  return initial_state(grid, u, v);
}

Drift drift(const Grid1D& grid, const Field3& u, const Field3& v, const SpdeParams& params,
            const NoiseBasis& basis) {
  const double lambda = h1_seminorm_sq(grid, u);
  const double v2 = inner_l2(grid, v, v);
  Field3 bracket = laplacian(grid, u) + (lambda - params.mu * v2) * u - params.gamma * v;
  if (basis.modes() > 0) {
    bracket += 0.5 * params.correction_coefficient() * strat_correction(u, v, basis);
  }
  return {v, bracket / params.mu};
}

SpdeStepper::SpdeStepper(const Grid1D& grid, const NoiseBasis& basis, SpdeParams params)
    : grid_(grid),
      basis_(&basis),
      params_(params),
      solver_(grid.n(),
              1.0 + params.gamma * params.dt / params.mu +
                  2.0 * params.dt * params.dt / (params.mu * grid.h() * grid.h()),
              -params.dt * params.dt / (params.mu * grid.h() * grid.h())) {
  if (!(basis.grid() == grid)) throw ShapeError("SpdeStepper: basis built on a different grid");
  validate(params_, grid_);
}

std::size_t SpdeStepper::step_count() const {
  return static_cast<std::size_t>(std::llround(params_.horizon / params_.dt));
}

State SpdeStepper::step(const State& state, const WienerIncrement& dW) const {
  const double mu = params_.mu;
  const double dt = params_.dt;
  const Field3& u = state.u;
  const Field3& v = state.v;

  // (1) (I + gamma dt/mu - dt^2/mu A_h) v* = v + dt/mu [A_h u + N(u, v)]
  const double lambda = h1_seminorm_sq(grid_, u);
  const double v2 = inner_l2(grid_, v, v);
  Field3 rhs = laplacian(grid_, u) + (lambda - mu * v2) * u;
  if (basis_->modes() > 0) {
    rhs += 0.5 * params_.correction_coefficient() * strat_correction(u, v, *basis_);
  }
  rhs = v + (dt / mu) * rhs;
  solver_.solve_in_place(rhs);

  // (2) noise kick, Ito: evaluated at the old state
  State next;
  if (basis_->modes() > 0) {
    Field3 kick = apply_noise(u, v, *basis_, dW);
    rhs += params_.noise_coefficient() * kick;
    next.acc_noise = state.acc_noise + std::pow(mu, params_.alpha) * kick;
  } else {
    next.acc_noise = state.acc_noise;
  }

  // (3) position update, (4) optional projection onto the tangent bundle
  next.u = u + dt * rhs;
  if (params_.projection) {
    next.u = normalize_sphere(grid_, next.u);
    next.v = project_tangent(grid_, next.u, rhs);
  } else {
    next.v = std::move(rhs);
  }

  // (5) accumulators
  next.acc_v2 = state.acc_v2 + 0.5 * dt * (v2 + inner_l2(grid_, next.v, next.v));
  next.steps = state.steps + 1;
  next.t = static_cast<double>(next.steps) * dt;

  if (!next.u.allFinite() || !next.v.allFinite()) {
    throw BlowUpError(next.steps, "non-finite field at t = " + std::to_string(next.t));
  }
  return next;
}

IncrementSource stream_increments(const SpdeStepper& stepper) {
  const NoiseBasis* basis = &stepper.basis();
  const double dt = stepper.params().dt;
  const RngStream stream = stepper.params().stream;
  return [basis, dt, stream](std::uint64_t k) { return sample_increment(*basis, dt, stream, k); };
}

State run_steps(const SpdeStepper& stepper, State state, std::size_t steps,
                const IncrementSource& increments, const StepObserver& observer) {
  for (std::size_t k = 0; k < steps; ++k) {
    const WienerIncrement dW = increments(state.steps);
    State next = stepper.step(state, dW);
    if (observer) observer(state, next, dW);
    state = std::move(next);
  }
  return state;
}

double energy(const Grid1D& grid, const State& state, const SpdeParams& params) {
  return h1_seminorm_sq(grid, state.u) + params.mu * inner_l2(grid, state.v, state.v) +
         2.0 * params.gamma * state.acc_v2;
}

ConstraintResiduals constraint_residuals(const Grid1D& grid, const State& state) {
  return {0.5 * (inner_l2(grid, state.u, state.u) - 1.0), inner_l2(grid, state.u, state.v)};
}

double weighted_h2_energy(const Grid1D& grid, const State& state, const SpdeParams& params,
                          double a) {
  if (!(a >= 0.0)) throw ParameterError("weighted_h2_energy: a must be >= 0");
  const double u_h2 = h2_seminorm(grid, state.u);
  const double body = u_h2 * u_h2 + params.mu * h1_seminorm_sq(grid, state.v) +
                      params.mu * h1_seminorm_sq(grid, state.u) * inner_l2(grid, state.v, state.v);
  return std::exp(-a * state.acc_v2) * body;
}

namespace detail {

Field3 pad_closed(const Field3& f) {
  Field3 out = Field3::Zero(f.rows() + 2, 3);
  out.middleRows(1, f.rows()) = f;
  return out;
}

Eigen::VectorXd closed_weights(const Grid1D& grid) {
  Eigen::VectorXd w = Eigen::VectorXd::Constant(grid.n() + 2, grid.h());
  w(0) = w(grid.n() + 1) = 0.5 * grid.h();
  return w;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> closed_basis(const NoiseBasis& basis) {
  const Grid1D& grid = basis.grid();
  const int rows = grid.n() + 2;
  Eigen::MatrixXd xi(rows, basis.modes());
  Eigen::MatrixXd dxi(rows, basis.modes());
  for (int i = 1; i <= basis.modes(); ++i) {
    for (int j = 0; j < rows; ++j) {
      const double x = j * grid.h();
      // sin vanishes at both ends; avoid the O(eps) residue of sin(i pi).
      xi(j, i - 1) = (j == 0 || j == rows - 1) ? 0.0 : basis.value(i, x);
      dxi(j, i - 1) = basis.derivative(i, x);
    }
  }
  return {xi, dxi};
}

}  // namespace detail

double functional_J(const SineTransform<double>& transform, const Field3& u, const Field3& v,
                    const NoiseBasis& basis) {
  const Grid1D& grid = transform.grid();
  if (basis.modes() == 0) return 0.0;
  const Field3 uc = detail::pad_closed(u);
  const Field3 vc = detail::pad_closed(v);
  const Field3 du = transform.derivative_closed(u);
  const Field3 dv = transform.derivative_closed(v);
  const auto [xi, dxi] = detail::closed_basis(basis);
  const Eigen::VectorXd phi = xi.rowwise().squaredNorm();
  const Eigen::VectorXd phi1 = dxi.rowwise().squaredNorm();
  const Eigen::VectorXd xdx = xi.cwiseProduct(dxi).rowwise().sum();
  const Eigen::VectorXd w = detail::closed_weights(grid);

  const Field3 uxv = cross_rows(uc, vc);
  const Field3 duxv = cross_rows(du, vc);
  const Field3 duxu = cross_rows(du, uc);
  const Field3 dvxv = cross_rows(dv, vc);

  const Eigen::VectorXd integrand =
      uxv.rowwise().squaredNorm().cwiseProduct(phi1) +
      2.0 * dot_rows(uxv, duxv).cwiseProduct(xdx) +
      (duxv.rowwise().squaredNorm() - dot_rows(duxu, dvxv)).cwiseProduct(phi);
  return w.dot(integrand);
}

double functional_G_norm(const SineTransform<double>& transform, const Field3& u,
                         const Field3& v, const NoiseBasis& basis) {
  const Grid1D& grid = transform.grid();
  const Field3 uc = detail::pad_closed(u);
  const Field3 vc = detail::pad_closed(v);
  const Field3 du = transform.derivative_closed(u);
  const Field3 dv = transform.derivative_closed(v);
  const auto [xi, dxi] = detail::closed_basis(basis);
  const Eigen::VectorXd w = detail::closed_weights(grid);

  // D((u x v) xi) = (Du x v + u x Dv) xi + (u x v) xi'
  const Field3 uxv = cross_rows(uc, vc);
  const Field3 d_uxv = cross_rows(du, vc) + cross_rows(uc, dv);
  const Eigen::VectorXd a = w.cwiseProduct(dot_rows(dv, d_uxv));
  const Eigen::VectorXd b = w.cwiseProduct(dot_rows(dv, uxv));
  const Eigen::VectorXd g = xi.transpose() * a + dxi.transpose() * b;
  return g.squaredNorm();
}

StepDiagnostics diagnose(const Grid1D& grid, const State& state, const SpdeParams& params,
                         double weight_a) {
  StepDiagnostics row;
  row.t = state.t;
  row.energy = energy(grid, state, params);
  const ConstraintResiduals c = constraint_residuals(grid, state);
  row.theta = c.theta;
  row.eta = c.eta;
  row.u_h1 = std::sqrt(std::max(0.0, h1_seminorm_sq(grid, state.u)));
  row.u_h2 = h2_seminorm(grid, state.u);
  row.v_h = norm_l2(grid, state.v);
  row.v_h1 = std::sqrt(std::max(0.0, h1_seminorm_sq(grid, state.v)));
  row.weighted_h2 = weighted_h2_energy(grid, state, params, weight_a);
  return row;
}

bool all_finite(const StepDiagnostics& r) {
  return std::isfinite(r.t) && std::isfinite(r.energy) && std::isfinite(r.theta) &&
         std::isfinite(r.eta) && std::isfinite(r.u_h1) && std::isfinite(r.u_h2) &&
         std::isfinite(r.v_h) && std::isfinite(r.v_h1) && std::isfinite(r.weighted_h2);
}

}  // namespace sml
