#pragma once

// Discrete grid, R^3-valued fields on (0,L) with homogeneous Dirichlet data,
// trapezoidal quadrature, the second-difference operator and Sobolev norms.
//
// A field is an n x 3 matrix: row j holds the value at node x_{j+1}, the
// boundary values are implicitly zero.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <string>

#include "sml/errors.hpp"

namespace sml {

template <typename Scalar>
using Field3T = Eigen::Matrix<Scalar, Eigen::Dynamic, 3>;
using Field3 = Field3T<double>;

template <typename Scalar>
using Vec3T = Eigen::Matrix<Scalar, 3, 1>;
using Vec3 = Vec3T<double>;

/// Uniform grid of n interior nodes x_j = j h, j = 1..n, on (0, L), h = L/(n+1).
class Grid1D {
 public:
  Grid1D(double length, int n) : length_(length), n_(n) {
    if (!(length > 0.0) || !std::isfinite(length)) {
      throw ParameterError("grid length must be positive, got " + std::to_string(length));
    }
    if (n < 2) {
      throw ParameterError("grid needs at least 2 interior nodes, got " + std::to_string(n));
    }
    h_ = length_ / static_cast<double>(n_ + 1);
  }

  double length() const noexcept { return length_; }
  int n() const noexcept { return n_; }
  double h() const noexcept { return h_; }

  /// Coordinate of interior node j (0-based row index, so x(0) = h).
  double x(int j) const noexcept { return static_cast<double>(j + 1) * h_; }

  /// Eigenvalue of -A_h belonging to the k-th sine vector, k = 1..n.
  double eigenvalue(int k) const noexcept {
    return 2.0 / (h_ * h_) * (1.0 - std::cos(k * std::numbers::pi * h_ / length_));
  }

  bool operator==(const Grid1D& other) const noexcept {
    return n_ == other.n_ && length_ == other.length_;
  }

 private:
  double length_;
  int n_;
  double h_;
};

namespace detail {

template <typename Derived>
void check_shape(const Grid1D& grid, const Eigen::MatrixBase<Derived>& f, const char* what) {
  if (f.rows() != grid.n() || f.cols() != 3) {
    throw ShapeError(std::string(what) + ": field has shape " + std::to_string(f.rows()) + "x" +
                     std::to_string(f.cols()) + ", grid expects " + std::to_string(grid.n()) +
                     "x3");
  }
}

}  // namespace detail

/// Zero field on the grid.
template <typename Scalar = double>
Field3T<Scalar> zero_field(const Grid1D& grid) {
  return Field3T<Scalar>::Zero(grid.n(), 3);
}

/// c * sin(k pi x / L) e_d sampled at the interior nodes (d = 0, 1, 2).
template <typename Scalar = double>
Field3T<Scalar> sine_mode(const Grid1D& grid, int k, int component, Scalar coefficient = Scalar(1)) {
  if (component < 0 || component > 2) throw ParameterError("component index must be 0, 1 or 2");
  if (k < 1) throw ParameterError("sine mode index must be >= 1");
  using std::sin;
  Field3T<Scalar> f = Field3T<Scalar>::Zero(grid.n(), 3);
  const Scalar step = std::numbers::pi_v<Scalar> * static_cast<Scalar>(k) /
                      static_cast<Scalar>(grid.n() + 1);
  for (int j = 0; j < grid.n(); ++j) {
    f(j, component) = coefficient * sin(step * static_cast<Scalar>(j + 1));
  }
  return f;
}

/// <f, g>_H by the composite trapezoid rule (boundary values are zero).
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar inner_l2(const Grid1D& grid, const Eigen::MatrixBase<DerivedA>& f,
                                   const Eigen::MatrixBase<DerivedB>& g) {
  detail::check_shape(grid, f, "inner_l2");
  detail::check_shape(grid, g, "inner_l2");
  return static_cast<typename DerivedA::Scalar>(grid.h()) * f.cwiseProduct(g).sum();
}

template <typename Derived>
typename Derived::Scalar norm_l2(const Grid1D& grid, const Eigen::MatrixBase<Derived>& f) {
  using std::sqrt;
  return sqrt(inner_l2(grid, f, f));
}

/// A_h f: second central difference per component, zero boundary neighbours.
template <typename Derived>
Field3T<typename Derived::Scalar> laplacian(const Grid1D& grid, const Eigen::MatrixBase<Derived>& f) {
  using Scalar = typename Derived::Scalar;
  detail::check_shape(grid, f, "laplacian");
  const Eigen::Index n = f.rows();
  const Scalar inv_h2 = Scalar(1) / static_cast<Scalar>(grid.h() * grid.h());
  Field3T<Scalar> out = Scalar(-2) * f;
  out.topRows(n - 1) += f.bottomRows(n - 1);
  out.bottomRows(n - 1) += f.topRows(n - 1);
  out *= inv_h2;
  return out;
}

/// |f|^2_{H^1} := <-A_h f, f>_H (summation by parts form).
template <typename Derived>
typename Derived::Scalar h1_seminorm_sq(const Grid1D& grid, const Eigen::MatrixBase<Derived>& f) {
  return -inner_l2(grid, laplacian(grid, f), f);
}

/// |f|_{H^2} := |A_h f|_H.
template <typename Derived>
typename Derived::Scalar h2_seminorm(const Grid1D& grid, const Eigen::MatrixBase<Derived>& f) {
  return norm_l2(grid, laplacian(grid, f));
}

// Pointwise vector algebra ------------------------------------------------

template <typename Scalar>
Vec3T<Scalar> cross(const Vec3T<Scalar>& a, const Vec3T<Scalar>& b) {
  return a.cross(b);
}

/// h x (h x k) = -|h|^2 k + (h . k) h.
template <typename Scalar>
Vec3T<Scalar> triple_cross(const Vec3T<Scalar>& h, const Vec3T<Scalar>& k) {
  return -h.squaredNorm() * k + h.dot(k) * h;
}

/// Row-by-row cross product of two fields.
template <typename DerivedA, typename DerivedB>
Field3T<typename DerivedA::Scalar> cross_rows(const Eigen::MatrixBase<DerivedA>& a,
                                              const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.rows() != b.rows()) throw ShapeError("cross_rows: row count mismatch");
  Field3T<Scalar> out(a.rows(), 3);
  for (Eigen::Index j = 0; j < a.rows(); ++j) {
    out(j, 0) = a(j, 1) * b(j, 2) - a(j, 2) * b(j, 1);
    out(j, 1) = a(j, 2) * b(j, 0) - a(j, 0) * b(j, 2);
    out(j, 2) = a(j, 0) * b(j, 1) - a(j, 1) * b(j, 0);
  }
  return out;
}

/// Row-by-row dot product, as a column vector.
template <typename DerivedA, typename DerivedB>
Eigen::Matrix<typename DerivedA::Scalar, Eigen::Dynamic, 1> dot_rows(
    const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  if (a.rows() != b.rows()) throw ShapeError("dot_rows: row count mismatch");
  return a.cwiseProduct(b).rowwise().sum();
}

// Sphere and tangent bundle ------------------------------------------------

/// v - (<u,v>/|u|^2) u.
template <typename DerivedU, typename DerivedV>
Field3T<typename DerivedU::Scalar> project_tangent(const Grid1D& grid,
                                                   const Eigen::MatrixBase<DerivedU>& u,
                                                   const Eigen::MatrixBase<DerivedV>& v) {
  using Scalar = typename DerivedU::Scalar;
  const Scalar uu = inner_l2(grid, u, u);
  if (!(uu > Scalar(0))) throw DegenerateInputError("project_tangent: |u|_H = 0");
  const Scalar uv = inner_l2(grid, u, v);
  return v - (uv / uu) * u;
}

/// u / |u|_H.
template <typename Derived>
Field3T<typename Derived::Scalar> normalize_sphere(const Grid1D& grid,
                                                   const Eigen::MatrixBase<Derived>& u) {
  using Scalar = typename Derived::Scalar;
  const Scalar norm = norm_l2(grid, u);
  if (!(norm > Scalar(0))) throw DegenerateInputError("normalize_sphere: |u|_H = 0");
  return u / norm;
}

// Sine spectrum ------------------------------------------------------------

/// Coefficients c_{k,d} of f = sum_k c_{k,d} sqrt(2/L) sin(k pi x / L) e_d.
/// Row k-1 holds mode k.
template <typename Scalar = double>
struct SineSpectrum {
  Field3T<Scalar> coefficients;
};

/// Discrete sine transform on a fixed grid, realized as a dense orthogonal
/// change of basis. The sine vectors are exact eigenvectors of A_h.
template <typename Scalar = double>
class SineTransform {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  explicit SineTransform(const Grid1D& grid) : grid_(grid) {
    using std::cos;
    using std::sin;
    using std::sqrt;
    const int n = grid.n();
    const Scalar L = static_cast<Scalar>(grid.length());
    const Scalar amp = sqrt(Scalar(2) / L);
    // Angles k j pi / (n + 1) in the working precision.
    const Scalar step = std::numbers::pi_v<Scalar> / static_cast<Scalar>(n + 1);
    modes_.resize(n, n);
    eigenvalues_.resize(n);
    derivative_.resize(n + 2, n);
    for (int k = 1; k <= n; ++k) {
      eigenvalues_(k - 1) = static_cast<Scalar>(grid.eigenvalue(k));
      const Scalar wave = static_cast<Scalar>(k) * std::numbers::pi_v<Scalar> / L;
      for (int j = 0; j < n; ++j) {
        modes_(j, k - 1) = amp * sin(static_cast<Scalar>((k * (j + 1)) % (2 * (n + 1))) * step);
      }
      for (int j = 0; j < n + 2; ++j) {
        derivative_(j, k - 1) = amp * wave * cos(static_cast<Scalar>((k * j) % (2 * (n + 1))) * step);
      }
    }
  }

  const Grid1D& grid() const noexcept { return grid_; }

  template <typename Derived>
  SineSpectrum<Scalar> forward(const Eigen::MatrixBase<Derived>& f) const {
    detail::check_shape(grid_, f, "SineTransform::forward");
    return {static_cast<Scalar>(grid_.h()) * (modes_.transpose() * f)};
  }

  Field3T<Scalar> inverse(const SineSpectrum<Scalar>& spectrum) const {
    if (spectrum.coefficients.rows() != grid_.n()) {
      throw ShapeError("SineTransform::inverse: spectrum size mismatch");
    }
    return modes_ * spectrum.coefficients;
  }

  /// Derivative of the sine interpolant of f at all n+2 nodes x_j = j h,
  /// j = 0..n+1, boundaries included.
  template <typename Derived>
  Field3T<Scalar> derivative_closed(const Eigen::MatrixBase<Derived>& f) const {
    return derivative_ * forward(f).coefficients;
  }

  /// Eigenvalues lambda_{h,k} of -A_h, k = 1..n.
  const Vector& eigenvalues() const noexcept { return eigenvalues_; }

 private:
  Grid1D grid_;
  Matrix modes_;
  Matrix derivative_;
  Vector eigenvalues_;
};

/// (sum_{k,d} lambda_{h,k}^delta |c_{k,d}|^2)^{1/2}. delta = 0 gives |f|_H,
/// delta = 1 gives |f|_{H^1} and delta = 2 gives |A_h f|_H.
template <typename Scalar, typename Derived>
Scalar sobolev_norm(const SineTransform<Scalar>& transform, const Eigen::MatrixBase<Derived>& f,
                    double delta) {
  using std::pow;
  using std::sqrt;
  if (!(delta >= 0.0 && delta <= 2.0)) {
    throw ParameterError("sobolev_norm: delta must lie in [0, 2], got " + std::to_string(delta));
  }
  const SineSpectrum<Scalar> spec = transform.forward(f);
  const auto& lambda = transform.eigenvalues();
  Scalar total(0);
  for (Eigen::Index k = 0; k < lambda.size(); ++k) {
    const Scalar weight = delta == 0.0 ? Scalar(1) : static_cast<Scalar>(pow(lambda(k), delta));
    total += weight * spec.coefficients.row(k).squaredNorm();
  }
  return sqrt(total);
}

template <typename Derived>
typename Derived::Scalar sobolev_norm(const Grid1D& grid, const Eigen::MatrixBase<Derived>& f,
                                      double delta) {
  return sobolev_norm(SineTransform<typename Derived::Scalar>(grid), f, delta);
}

}  // namespace sml
