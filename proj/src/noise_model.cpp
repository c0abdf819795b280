#include "sml/noise_model.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

namespace sml {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

NoiseBasis::NoiseBasis(int m, double p, const Grid1D& grid) : grid_(grid), m_(m), p_(p) {
  if (m < 0) throw ParameterError("noise mode count must be >= 0");
  if (!(p >= 2.0)) {
    throw HypothesisError("noise decay exponent p = " + std::to_string(p) +
                          " < 2: sum_i a_i^2 i^2 need not be finite");
  }
  if (m > grid.n()) {
    throw AliasingError("noise modes m = " + std::to_string(m) + " exceed grid nodes n = " +
                        std::to_string(grid.n()));
  }
  const int n = grid.n();
  const double L = grid.length();
  xi_.setZero(n, m);
  xi_prime_.setZero(n, m);
  for (int i = 1; i <= m; ++i) {
    for (int j = 0; j < n; ++j) {
      xi_(j, i - 1) = value(i, grid.x(j));
      xi_prime_(j, i - 1) = derivative(i, grid.x(j));
    }
    const double a2 = amplitude(i) * amplitude(i);
    const double wave = i * std::numbers::pi / L;
    phi_bound_ += a2 * 2.0 / L;
    phi1_bound_ += a2 * wave * wave * 2.0 / L;
  }
  phi_ = xi_.rowwise().squaredNorm();
  phi1_ = xi_prime_.rowwise().squaredNorm();
  xi_xi_prime_ = xi_.cwiseProduct(xi_prime_).rowwise().sum();
  if (m == 0) {
    phi_.setZero(n);
    phi1_.setZero(n);
    xi_xi_prime_.setZero(n);
  }
}

double NoiseBasis::amplitude(int i) const { return std::pow(static_cast<double>(i), -p_); }

double NoiseBasis::value(int i, double x) const {
  const double L = grid_.length();
  return amplitude(i) * std::sqrt(2.0 / L) * std::sin(i * std::numbers::pi * x / L);
}

double NoiseBasis::derivative(int i, double x) const {
  const double L = grid_.length();
  const double wave = i * std::numbers::pi / L;
  return amplitude(i) * std::sqrt(2.0 / L) * wave * std::cos(wave * x);
}

double NoiseBasis::phi_tail_bound() const noexcept {
  // sum_{i>m} i^{-2p} <= int_m^inf s^{-2p} ds (m >= 1), plus the i = 1 term if m = 0.
  const double L = grid_.length();
  if (m_ == 0) return 2.0 / L * (1.0 + 1.0 / (2.0 * p_ - 1.0));
  return 2.0 / L * std::pow(m_, 1.0 - 2.0 * p_) / (2.0 * p_ - 1.0);
}

double NoiseBasis::phi1_tail_bound() const noexcept {
  const double L = grid_.length();
  const double w2 = std::numbers::pi * std::numbers::pi / (L * L);
  if (m_ == 0) return 2.0 / L * w2 * (1.0 + 1.0 / (2.0 * p_ - 3.0));
  return 2.0 / L * w2 * std::pow(m_, 3.0 - 2.0 * p_) / (2.0 * p_ - 3.0);
}

NoiseBasis build_basis(int m, double p, const Grid1D& grid) { return NoiseBasis(m, p, grid); }

RngStream derive_stream(RngStream parent, std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = splitmix64(parent.id);
  s = splitmix64(s ^ (a + 0x632be59bd9b4e019ULL));
  s = splitmix64(s ^ (b + 0x85157af5a2a5cb01ULL));
  return {s};
}

WienerIncrement sample_increment(const NoiseBasis& basis, double dt, RngStream stream,
                                 std::uint64_t index) {
  if (!(dt > 0.0)) throw ParameterError("sample_increment: dt must be positive");
  WienerIncrement dW{dt, Eigen::VectorXd(basis.modes()), stream};
  std::mt19937_64 engine(splitmix64(stream.id ^ splitmix64(index)));
  std::normal_distribution<double> normal(0.0, std::sqrt(dt));
  for (int i = 0; i < basis.modes(); ++i) dW.values(i) = normal(engine);
  return dW;
}

WienerIncrement coarse_increment(const NoiseBasis& basis, double fine_dt, RngStream stream,
                                 std::uint64_t step, int level) {
  if (level < 0) throw ParameterError("coarse_increment: level must be >= 0");
  const std::uint64_t factor = std::uint64_t{1} << level;
  WienerIncrement dW{fine_dt * static_cast<double>(factor), Eigen::VectorXd::Zero(basis.modes()),
                     stream};
  for (std::uint64_t r = 0; r < factor; ++r) {
    dW.values += sample_increment(basis, fine_dt, stream, step * factor + r).values;
  }
  return dW;
}

Field3 strat_correction(const Field3& u, const Field3& v, const NoiseBasis& basis) {
  if (u.rows() != basis.grid().n() || v.rows() != u.rows()) {
    throw ShapeError("strat_correction: field/grid mismatch");
  }
  const Eigen::VectorXd uu = u.rowwise().squaredNorm();
  const Eigen::VectorXd uv = dot_rows(u, v);
  Field3 out = (u.array().colwise() * uv.array() - v.array().colwise() * uu.array()).matrix();
  return out.array().colwise() * basis.phi().array();
}

Field3 apply_noise(const Field3& u, const Field3& v, const NoiseBasis& basis,
                   const WienerIncrement& dW) {
  if (dW.values.size() != basis.modes()) {
    throw ShapeError("apply_noise: increment has " + std::to_string(dW.values.size()) +
                     " entries, basis has " + std::to_string(basis.modes()) + " modes");
  }
  if (u.rows() != basis.grid().n() || v.rows() != u.rows()) {
    throw ShapeError("apply_noise: field/grid mismatch");
  }
  if (basis.modes() == 0) return Field3::Zero(u.rows(), 3);
  const Eigen::VectorXd weight = basis.xi() * dW.values;
  Field3 out = cross_rows(u, v);
  return out.array().colwise() * weight.array();
}

}  // namespace sml
