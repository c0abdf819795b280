#pragma once

// Small-mass study: ensembles of SPDE trajectories for a decreasing list of
// masses, compared with the deterministic limit on a common output grid, plus
// the remainder decomposition of the integrated momentum identity
//
//   gamma u + c/2 phi |u|^2 u + mu v = (same at t = 0) + int A u + int |u|^2_{H^1} u
//       + 3c/(2 gamma) phi int (A u . u) u + 3c/(2 gamma) phi int |u|^2_{H^1} |u|^2 u + R,
//
//   R = 3c mu/(2 gamma) phi (u0.v0) u0 + J1 + ... + J6,  c = mu^{2 alpha - 1}.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sml/field_core.hpp"
#include "sml/limit_pde.hpp"
#include "sml/noise_model.hpp"
#include "sml/spde_sim.hpp"

namespace sml {

/// One term c sin(k pi x / L) e_component of an initial field.
struct ModeTerm {
  int k = 1;
  int component = 0;
  double coefficient = 1.0;
};

/// Sum of the mode terms sampled on the grid (not normalized).
Field3 field_from_modes(const Grid1D& grid, const std::vector<ModeTerm>& modes);

// Remainder ------------------------------------------------------------------

struct RemainderSample {
  double t = 0.0;
  /// |J_{mu,i}(t)|_H, i = 1..6.
  std::array<double, 6> j{};
  /// |LHS - RHS|_H of the identity, R included.
  double identity_residual = 0.0;
};

/// Accumulates the time integrals of the identity along a trajectory. Feed
/// every step through observe(); sample() evaluates the six remainder terms
/// and the identity residual at the current state.
class RemainderTracker {
 public:
  RemainderTracker(const Grid1D& grid, const NoiseBasis& basis, const SpdeParams& params,
                   const State& initial);

  void observe(const State& before, const State& after);
  RemainderSample sample(const State& current) const;

 private:
  struct Integrands {
    Field3 lap;       // A u
    Field3 force;     // |u|^2_{H^1} u
    Field3 lap_dot;   // (A u . u) u
    Field3 force_sq;  // |u|^2_{H^1} |u|^2 u
    Field3 j2;        // |v|_H^2 u
    Field3 j3;        // (u . v) v
    Field3 j4;        // |v|^2 u
    Field3 j5;        // |v|_H^2 |u|^2 u
  };
  Integrands integrands(const State& s) const;
  Field3 momentum(const State& s) const;

  Grid1D grid_;
  Eigen::VectorXd phi_eff_;
  double mu_;
  double gamma_;
  Field3 momentum0_;
  Field3 constant_;  // 3c mu/(2 gamma) phi (u0.v0) u0
  Integrands sums_;
  Integrands last_;
};

/// J1..J6 and the identity residual along one trajectory, sampled every
/// `stride` steps (the first and last states always included).
std::vector<RemainderSample> remainder_terms(const SpdeStepper& stepper, const State& initial,
                                             const IncrementSource& increments,
                                             std::size_t stride);

// Study ----------------------------------------------------------------------

enum class LimitTarget { corrected, parabolic };

struct StudyConfig {
  double length = 1.0;
  int n = 127;
  double gamma = 1.0;
  int modes = 16;
  double decay = 2.0;
  double horizon = 1.0;
  /// Strictly decreasing masses in (0, 1].
  std::vector<double> mus{0.2, 0.1, 0.05, 0.025};
  double alpha = 0.5;
  int ensemble = 16;
  double delta = 1.0;
  std::uint64_t master_seed = 42;
  std::vector<ModeTerm> initial{{1, 0, 1.0}, {2, 1, 0.5}, {3, 2, 0.3}};
  /// Optional initial velocity, projected onto the tangent space.
  std::vector<ModeTerm> initial_velocity{};
  /// Fixed step for every mass; 0 selects dt_scale * mu within the stability bound.
  double dt = 0.0;
  double dt_scale = 1e-3;
  bool projection = true;
  /// Same child seed for a given sample index at every mass.
  bool common_random_numbers = true;
  std::size_t outputs = 256;
  double h2_cap = 1e4;
  /// Allow alpha < 1/2 (no limit is known there; results are exploratory).
  bool exploratory = false;
  /// Worker threads; 0 uses the hardware concurrency.
  unsigned threads = 0;
};

/// Throws ParameterError when the configuration is outside its admissible range.
void validate(const StudyConfig& config);

/// Target of the error for the configured alpha: parabolic for alpha > 1/2,
/// corrected otherwise.
LimitTarget primary_target(const StudyConfig& config);

/// Per-mass step sizes. With automatic steps all of them are powers-of-two
/// multiples of one fine step, so that coupled paths share the same
/// increments; every step count is a multiple of the output count.
struct StepPlan {
  double fine_dt = 0.0;
  std::size_t fine_steps = 0;
  std::vector<int> levels;  // dt_i = fine_dt * 2^levels[i]
  std::vector<double> dts;
};

StepPlan plan_steps(const StudyConfig& config);

/// Child stream of a sample; with common random numbers the mass index is ignored.
RngStream sample_stream(const StudyConfig& config, std::size_t mu_index, std::size_t sample);

struct SampleRecord {
  std::size_t mu_index = 0;
  std::size_t sample = 0;
  double mu = 0.0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::size_t failure_step = 0;
  std::string failure;
  /// sup_k |u_mu(t_k) - u(t_k)|_{H^delta} against the primary target.
  double error = 0.0;
  /// Same against the other limit candidate.
  double error_alternate = 0.0;
  /// max_t |E(t) - E(0)| / E(0).
  double energy_residual = 0.0;
  double theta_max = 0.0;
  double eta_max = 0.0;
  std::array<double, 6> j_sup{};
  double identity_residual = 0.0;
};

struct LevelSummary {
  double mu = 0.0;
  double dt = 0.0;
  std::size_t samples = 0;
  std::size_t failures = 0;
  double mean_error = 0.0;
  double std_error = 0.0;
  double mean_error_alternate = 0.0;
  double std_error_alternate = 0.0;
  double mean_energy_residual = 0.0;
  double max_energy_residual = 0.0;
  /// max_i of the ensemble mean of sup_t |J_i|_H.
  double remainder_max = 0.0;
  std::array<double, 6> mean_j_sup{};
  double mean_identity_residual = 0.0;
};

struct StudyResult {
  StudyConfig config;
  LimitTarget target = LimitTarget::corrected;
  bool exploratory = false;
  StepPlan plan;
  double limit_dt = 0.0;
  /// Rows sorted by (mu index, sample index).
  std::vector<SampleRecord> samples;
  std::vector<LevelSummary> levels;
  /// False when some mass level lost more than half of its trajectories.
  bool ok = true;
  std::string message;
};

/// Recomputes the per-level statistics from the sample rows.
std::vector<LevelSummary> summarize(const StudyConfig& config, const StepPlan& plan,
                                    const std::vector<SampleRecord>& samples);

StudyResult run_study(const StudyConfig& config);

/// run_study with the error measured against the target alpha calls for.
/// alpha < 1/2 needs config.exploratory.
StudyResult scaling_experiment(const StudyConfig& config);

}  // namespace sml
