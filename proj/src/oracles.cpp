#include "sml/oracles.hpp"

#include "sml/spde_sim.hpp"

namespace sml::oracle {

Vec3 double_cross(const Vec3& h, const Vec3& k) {
  const Vec3 inner(h(1) * k(2) - h(2) * k(1), h(2) * k(0) - h(0) * k(2), h(0) * k(1) - h(1) * k(0));
  return Vec3(h(1) * inner(2) - h(2) * inner(1), h(2) * inner(0) - h(0) * inner(2),
              h(0) * inner(1) - h(1) * inner(0));
}

Field3 trace_by_summation(const Field3& u, const Field3& v, const NoiseBasis& basis) {
  Field3 out = Field3::Zero(u.rows(), 3);
  for (Eigen::Index j = 0; j < u.rows(); ++j) {
    const Vec3 uj = u.row(j).transpose();
    const Vec3 vj = v.row(j).transpose();
    for (int i = 0; i < basis.modes(); ++i) {
      const double xi = basis.xi()(j, i);
      const Vec3 sigma = uj.cross(vj) * xi;
      out.row(j) += (uj.cross(sigma) * xi).transpose();
    }
  }
  return out;
}

Eigen::Matrix3d mobility_matrix(const Vec3& u, double phi, double gamma) {
  return gamma * Eigen::Matrix3d::Identity() +
         0.5 * phi * (u.squaredNorm() * Eigen::Matrix3d::Identity() - u * u.transpose());
}

double functional_J_definition(const SineTransform<double>& transform, const Field3& u,
                               const Field3& v, const NoiseBasis& basis) {
  const Grid1D& grid = transform.grid();
  if (basis.modes() == 0) return 0.0;
  const Field3 uc = detail::pad_closed(u);
  const Field3 vc = detail::pad_closed(v);
  const Field3 du = transform.derivative_closed(u);
  const Field3 dv = transform.derivative_closed(v);
  const auto [xi, dxi] = detail::closed_basis(basis);
  const Eigen::VectorXd w = detail::closed_weights(grid);
  const Eigen::Index rows = uc.rows();

  double pairing = 0.0;  // <Dv, D tr>
  double hs = 0.0;       // sum_i |D((u x v) xi_i)|^2
  for (Eigen::Index j = 0; j < rows; ++j) {
    const Vec3 a = uc.row(j).transpose();
    const Vec3 b = vc.row(j).transpose();
    const Vec3 da = du.row(j).transpose();
    const Vec3 db = dv.row(j).transpose();
    const Vec3 axb = a.cross(b);
    const Vec3 d_axb = da.cross(b) + a.cross(db);
    const Vec3 t = a.cross(axb);
    const Vec3 dt = da.cross(axb) + a.cross(d_axb);
    Vec3 d_trace = Vec3::Zero();
    for (int i = 0; i < basis.modes(); ++i) {
      const double x = xi(j, i);
      const double dx = dxi(j, i);
      // D[xi^2 t] = 2 xi xi' t + xi^2 Dt
      d_trace += 2.0 * x * dx * t + x * x * dt;
      const Vec3 d_sigma = d_axb * x + axb * dx;
      hs += w(j) * d_sigma.squaredNorm();
    }
    pairing += w(j) * db.dot(d_trace);
  }
  return pairing + hs;
}

Field3 gram_schmidt(const Field3& u, const Field3& w) {
  long double uw = 0.0L, uu = 0.0L;
  for (Eigen::Index j = 0; j < u.rows(); ++j) {
    for (int d = 0; d < 3; ++d) {
      uw += static_cast<long double>(u(j, d)) * w(j, d);
      uu += static_cast<long double>(u(j, d)) * u(j, d);
    }
  }
  const double c = static_cast<double>(uw / uu);
  return w - c * u;
}

}  // namespace sml::oracle
