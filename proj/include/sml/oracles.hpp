#pragma once

// Independent reference computations: each one evaluates a quantity through
// its definition rather than through the closed form used by the library.

#include <Eigen/Dense>

#include "sml/field_core.hpp"
#include "sml/noise_model.hpp"

namespace sml::oracle {

/// cross(h, cross(h, k)) by two explicit cross products.
Vec3 double_cross(const Vec3& h, const Vec3& k);

/// tr_K[u x (u x v)] by summing xi_i (u x ((u x v) xi_i)) over the basis.
Field3 trace_by_summation(const Field3& u, const Field3& v, const NoiseBasis& basis);

/// Dense 3x3 mobility gamma I + phi/2 (|u|^2 I - u u^T) at one node.
Eigen::Matrix3d mobility_matrix(const Vec3& u, double phi, double gamma);

/// J(u,v) from its definition <v, tr_K(u x (u x v))>_{H^1} + sum_i |(u x v) xi_i|^2_{H^1},
/// with D of every product formed by the product rule from the sine-interpolant
/// derivatives and integrated by the closed-grid trapezoid rule.
double functional_J_definition(const SineTransform<double>& transform, const Field3& u,
                               const Field3& v, const NoiseBasis& basis);

/// Component of w orthogonal to u by classical Gram-Schmidt in <.,.>_H
/// (the quadrature weight cancels), inner products accumulated in long double.
Field3 gram_schmidt(const Field3& u, const Field3& w);

/// int_0^L f by composite Simpson on m panels (m even).
template <typename F>
double simpson(F f, double a, double b, int m) {
  const double h = (b - a) / m;
  double s = f(a) + f(b);
  for (int i = 1; i < m; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

}  // namespace sml::oracle
