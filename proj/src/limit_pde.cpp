#include "sml/limit_pde.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace sml {

double LimitParams::max_stable_dt(double gamma, double max_phi, const Grid1D& grid,
                                  double safety) {
  const double h2 = grid.h() * grid.h();
  return safety * h2 * std::min(0.5 * gamma, gamma / (2.0 * (gamma + 0.5 * max_phi)));
}

void validate(const LimitParams& params, const Grid1D& grid, const NoiseBasis& basis) {
  if (!(params.gamma > 0.0)) throw ParameterError("gamma must be positive");
  if (!(params.horizon > 0.0)) throw ParameterError("horizon must be positive");
  if (!(params.safety > 0.0 && params.safety <= 1.0)) {
    throw ParameterError("safety factor must lie in (0, 1]");
  }
  if (!(params.dt >= 0.0)) throw ParameterError("dt must be positive (or 0 for automatic)");
  if (!(basis.grid() == grid)) throw ShapeError("limit solver: basis built on a different grid");
  const double max_phi = params.parabolic ? 0.0 : basis.max_phi();
  const double bound = LimitParams::max_stable_dt(params.gamma, max_phi, grid, params.safety);
  if (params.dt > bound * (1.0 + 1e-12)) {
    throw ParameterError("dt = " + std::to_string(params.dt) +
                         " violates the limit-solver stability bound " + std::to_string(bound));
  }
}

Field3 limit_rhs(const Grid1D& grid, const Field3& u, const NoiseBasis& basis,
                 const LimitParams& params) {
  return limit_rhs(grid, u, Eigen::VectorXd(basis.phi()), params);
}

double explicit_form_residual(const Grid1D& grid, const Field3& u, const Field3& ut,
                              const NoiseBasis& basis, const LimitParams& params) {
  return explicit_form_residual(grid, u, ut, Eigen::VectorXd(basis.phi()), params);
}

Field3 repair_initial_datum(const Grid1D& grid, const Field3& u0, double h2_cap) {
  detail::check_shape(grid, u0, "repair_initial_datum");
  if (!u0.allFinite()) throw ParameterError("initial datum contains non-finite values");
  Field3 u = normalize_sphere(grid, u0);
  const double h2 = h2_seminorm(grid, u);
  if (!(h2 <= h2_cap)) {
    throw ParameterError("initial datum has |A_h u|_H = " + std::to_string(h2) +
                         " above the cap " + std::to_string(h2_cap));
  }
  return u;
}

template <typename Scalar>
LimitSolver<Scalar>::LimitSolver(const Grid1D& grid, const NoiseBasis& basis, LimitParams params)
    : grid_(grid), params_(params) {
  validate(params_, grid_, basis);
  if (params_.parabolic) {
    phi_ = VectorT<Scalar>::Zero(grid.n());
  } else {
    phi_ = basis.phi().template cast<Scalar>();
  }
  const double max_phi = params_.parabolic ? 0.0 : basis.max_phi();
  dt_max_ = params_.dt > 0.0
                ? params_.dt
                : LimitParams::max_stable_dt(params_.gamma, max_phi, grid_, params_.safety);
}

template <typename Scalar>
typename LimitSolver<Scalar>::Field LimitSolver<Scalar>::step(const Field& u, const Field& k1,
                                                              Scalar dt) const {
  const Scalar half = dt / Scalar(2);
  const Field k2 = rhs(u + half * k1);
  const Field k3 = rhs(u + half * k2);
  const Field k4 = rhs(u + dt * k3);
  Field next = u + (dt / Scalar(6)) * (k1 + Scalar(2) * (k2 + k3) + k4);
  if (params_.renormalize) next = normalize_sphere(grid_, next);
  return next;
}

template <typename Scalar>
std::pair<double, std::size_t> LimitSolver<Scalar>::schedule(std::size_t segments) const {
  if (segments == 0) throw ParameterError("limit solver: need at least one output segment");
  const double span = params_.horizon / static_cast<double>(segments);
  const auto per_segment = static_cast<std::size_t>(std::ceil(span / dt_max_ * (1.0 - 1e-12)));
  const std::size_t steps = segments * std::max<std::size_t>(per_segment, 1);
  return {params_.horizon / static_cast<double>(steps), steps};
}

template class LimitSolver<double>;
template class LimitSolver<long double>;

namespace {

template <typename Scalar>
void check_finite(const Field3T<Scalar>& u, std::size_t step) {
  if (!u.allFinite()) throw BlowUpError(step, "limit solver produced a non-finite field");
}

}  // namespace

template <typename Scalar>
LimitTrajectory solve_limit(const Grid1D& grid, const Field3& u0, const LimitParams& params,
                            const NoiseBasis& basis, std::size_t segments) {
  detail::check_shape(grid, u0, "solve_limit");
  const LimitSolver<Scalar> solver(grid, basis, params);
  const auto [dt, steps] = solver.schedule(segments);
  const std::size_t per_segment = steps / segments;
  const Scalar dts = static_cast<Scalar>(dt);

  LimitTrajectory out;
  out.dt = dt;
  out.steps = steps;
  Field3T<Scalar> u = u0.cast<Scalar>();
  Field3T<Scalar> ut = solver.rhs(u);
  Scalar dissipation(0);
  auto record = [&](std::size_t k) {
    out.t.push_back(static_cast<double>(k) * dt);
    out.u.push_back(u.template cast<double>());
    out.ut.push_back(ut.template cast<double>());
    out.dissipation.push_back(static_cast<double>(dissipation));
  };
  record(0);
  for (std::size_t k = 1; k <= steps; ++k) {
    const Scalar before = inner_l2(grid, ut, ut);
    u = solver.step(u, ut, dts);
    check_finite(u, k);
    ut = solver.rhs(u);
    dissipation += dts / Scalar(2) * (before + inner_l2(grid, ut, ut));
    if (k % per_segment == 0) record(k);
  }
  return out;
}

template LimitTrajectory solve_limit<double>(const Grid1D&, const Field3&, const LimitParams&,
                                             const NoiseBasis&, std::size_t);
template LimitTrajectory solve_limit<long double>(const Grid1D&, const Field3&,
                                                  const LimitParams&, const NoiseBasis&,
                                                  std::size_t);

std::vector<LimitRow> limit_rows(const Grid1D& grid, const LimitTrajectory& trajectory,
                                 double gamma) {
  std::vector<LimitRow> rows;
  if (trajectory.u.empty()) return rows;
  const double e0 = h1_seminorm_sq(grid, trajectory.u.front());
  rows.reserve(trajectory.u.size());
  for (std::size_t i = 0; i < trajectory.u.size(); ++i) {
    LimitRow r;
    r.t = trajectory.t[i];
    const double h1 = h1_seminorm_sq(grid, trajectory.u[i]);
    r.u_h1 = std::sqrt(std::max(0.0, h1));
    r.u_h2 = h2_seminorm(grid, trajectory.u[i]);
    r.ut_h = norm_l2(grid, trajectory.ut[i]);
    r.sphere_residual = std::abs(norm_l2(grid, trajectory.u[i]) - 1.0);
    r.energy_lhs = h1 + 2.0 * gamma * trajectory.dissipation[i];
    r.energy_rhs = e0;
    rows.push_back(r);
  }
  return rows;
}

template <typename Scalar>
ComparisonResult comparison_experiment(const Grid1D& grid, const Field3& u10, const Field3& u20,
                                       const LimitParams& params, const NoiseBasis& basis,
                                       std::size_t segments) {
  detail::check_shape(grid, u10, "comparison_experiment");
  detail::check_shape(grid, u20, "comparison_experiment");
  const LimitSolver<Scalar> solver(grid, basis, params);
  const auto [dt, steps] = solver.schedule(segments);
  const std::size_t per_segment = steps / segments;
  const Scalar dts = static_cast<Scalar>(dt);

  Field3T<Scalar> u1 = u10.cast<Scalar>();
  Field3T<Scalar> u2 = u20.cast<Scalar>();
  Field3T<Scalar> ut1 = solver.rhs(u1);
  Field3T<Scalar> ut2 = solver.rhs(u2);
  Field3T<Scalar> gap = ut1 - ut2;
  Scalar dissipation(0);

  ComparisonResult out;
  auto record = [&](std::size_t k) {
    ComparisonPoint p;
    p.t = static_cast<double>(k) * dt;
    p.distance_h1_sq = static_cast<double>(h1_seminorm_sq(grid, Field3T<Scalar>(u1 - u2)));
    p.dissipation_gap = static_cast<double>(dissipation);
    out.series.push_back(p);
  };
  record(0);
  out.initial_distance_sq = out.series.front().distance_h1_sq;
  for (std::size_t k = 1; k <= steps; ++k) {
    const Scalar before = inner_l2(grid, gap, gap);
    u1 = solver.step(u1, ut1, dts);
    u2 = solver.step(u2, ut2, dts);
    check_finite(u1, k);
    check_finite(u2, k);
    ut1 = solver.rhs(u1);
    ut2 = solver.rhs(u2);
    gap = ut1 - ut2;
    dissipation += dts / Scalar(2) * (before + inner_l2(grid, gap, gap));
    if (k % per_segment == 0) record(k);
  }

  if (out.initial_distance_sq > 0.0) {
    double st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0;
    std::size_t count = 0;
    for (const ComparisonPoint& p : out.series) {
      const double ratio = p.lhs() / out.initial_distance_sq;
      if (!(ratio > 0.0)) continue;
      const double y = std::log(ratio);
      st += p.t;
      sy += y;
      stt += p.t * p.t;
      sty += p.t * y;
      ++count;
    }
    const double n = static_cast<double>(count);
    const double denom = n * stt - st * st;
    if (count >= 2 && denom > 0.0) {
      out.c2 = (n * sty - st * sy) / denom;
      out.c1 = std::exp((sy - out.c2 * st) / n);
    }
  }
  return out;
}

template ComparisonResult comparison_experiment<double>(const Grid1D&, const Field3&,
                                                        const Field3&, const LimitParams&,
                                                        const NoiseBasis&, std::size_t);
template ComparisonResult comparison_experiment<long double>(const Grid1D&, const Field3&,
                                                             const Field3&, const LimitParams&,
                                                             const NoiseBasis&, std::size_t);

}  // namespace sml
