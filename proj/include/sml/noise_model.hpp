#pragma once

// Spatially coloured Wiener noise w(t,x) = sum_i xi_i(x) beta_i(t) with the
// truncated sine family xi_i(x) = i^{-p} sqrt(2/L) sin(i pi x / L), its kernels
// phi = sum xi_i^2 and phi1 = sum xi_i'^2, and the multiplicative noise
// (u x v) dw together with its Stratonovich correction.

#include <Eigen/Dense>

#include <cstdint>

#include "sml/field_core.hpp"

namespace sml {

class NoiseBasis {
 public:
  /// m = 0 gives the noiseless basis (phi = phi1 = 0).
  NoiseBasis(int m, double p, const Grid1D& grid);

  int modes() const noexcept { return m_; }
  double decay() const noexcept { return p_; }
  const Grid1D& grid() const noexcept { return grid_; }

  double amplitude(int i) const;          // i^{-p}, i = 1..m
  double value(int i, double x) const;    // xi_i(x)
  double derivative(int i, double x) const;  // xi_i'(x)

  /// Sampled xi_i(x_j): row j, column i-1.
  const Eigen::MatrixXd& xi() const noexcept { return xi_; }
  const Eigen::MatrixXd& xi_prime() const noexcept { return xi_prime_; }
  const Eigen::VectorXd& phi() const noexcept { return phi_; }
  const Eigen::VectorXd& phi1() const noexcept { return phi1_; }
  /// sum_i xi_i xi_i' = phi'/2.
  const Eigen::VectorXd& xi_xi_prime() const noexcept { return xi_xi_prime_; }

  /// Closed-form bounds sum a_i^2 (2/L) and sum a_i^2 (i pi/L)^2 (2/L).
  double phi_bound() const noexcept { return phi_bound_; }
  double phi1_bound() const noexcept { return phi1_bound_; }
  /// Upper bounds for what the untruncated series adds beyond mode m.
  double phi_tail_bound() const noexcept;
  double phi1_tail_bound() const noexcept;

  double max_phi() const noexcept { return m_ == 0 ? 0.0 : phi_.maxCoeff(); }

 private:
  Grid1D grid_;
  int m_;
  double p_;
  Eigen::MatrixXd xi_;
  Eigen::MatrixXd xi_prime_;
  Eigen::VectorXd phi_;
  Eigen::VectorXd phi1_;
  Eigen::VectorXd xi_xi_prime_;
  double phi_bound_ = 0.0;
  double phi1_bound_ = 0.0;
};

NoiseBasis build_basis(int m, double p, const Grid1D& grid);

/// Identifier of an independent random stream.
struct RngStream {
  std::uint64_t id = 0;
};

/// Child stream for a (parent, a, b) triple; a pure function of its inputs.
RngStream derive_stream(RngStream parent, std::uint64_t a, std::uint64_t b = 0);

/// Brownian increments Delta beta_i over one step, i = 1..m.
struct WienerIncrement {
  double dt = 0.0;
  Eigen::VectorXd values;
  RngStream stream;
};

/// m independent N(0, dt) draws. Draw number `index` of a given stream is
/// reproducible and independent of every other index.
WienerIncrement sample_increment(const NoiseBasis& basis, double dt, RngStream stream,
                                 std::uint64_t index);

/// Increment over a coarse step made of 2^level consecutive fine steps of size
/// fine_dt: the sum of fine draws 2^level*step .. 2^level*(step+1)-1. Halving
/// the step (level - 1) therefore reuses the same Brownian path.
WienerIncrement coarse_increment(const NoiseBasis& basis, double fine_dt, RngStream stream,
                                 std::uint64_t step, int level);

/// phi (u x (u x v)) = phi (-|u|^2 v + (u.v) u) pointwise; the full trace
/// tr_K[u x (u x v)] without the 1/2 of the Ito correction.
Field3 strat_correction(const Field3& u, const Field3& v, const NoiseBasis& basis);

/// (u x v) sum_i xi_i Delta beta_i pointwise.
Field3 apply_noise(const Field3& u, const Field3& v, const NoiseBasis& basis,
                   const WienerIncrement& dW);

}  // namespace sml
