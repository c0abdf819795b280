#pragma once

#include <Eigen/Dense>

#include "sml/errors.hpp"

namespace sml {

/// Constant-coefficient symmetric tridiagonal system (diag on the diagonal,
/// off on both off-diagonals), factored once and applied column by column.
template <typename Scalar = double>
class TridiagonalSolver {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  TridiagonalSolver(Eigen::Index n, Scalar diag, Scalar off) : off_(off), c_(n), inv_pivot_(n) {
    if (n < 1) throw ShapeError("TridiagonalSolver: empty system");
    Scalar pivot = diag;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i > 0) pivot = diag - off * c_(i - 1);
      if (pivot == Scalar(0)) throw ParameterError("TridiagonalSolver: zero pivot");
      inv_pivot_(i) = Scalar(1) / pivot;
      c_(i) = off * inv_pivot_(i);
    }
  }

  Eigen::Index size() const noexcept { return c_.size(); }

  /// Overwrites every column of rhs with the solution.
  template <typename Derived>
  void solve_in_place(Eigen::MatrixBase<Derived>& rhs) const {
    const Eigen::Index n = size();
    if (rhs.rows() != n) throw ShapeError("TridiagonalSolver: right-hand side size mismatch");
    for (Eigen::Index col = 0; col < rhs.cols(); ++col) {
      rhs(0, col) *= inv_pivot_(0);
      for (Eigen::Index i = 1; i < n; ++i) {
        rhs(i, col) = (rhs(i, col) - off_ * rhs(i - 1, col)) * inv_pivot_(i);
      }
      for (Eigen::Index i = n - 2; i >= 0; --i) rhs(i, col) -= c_(i) * rhs(i + 1, col);
    }
  }

 private:
  Scalar off_;
  Vector c_;
  Vector inv_pivot_;
};

}  // namespace sml
