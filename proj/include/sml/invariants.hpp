#pragma once

// Property and oracle suite over every module, at fixed small sizes. Each
// entry measures one quantity and compares it with its tolerance.

#include <cstdint>
#include <string>
#include <vector>

namespace sml {

struct InvariantResult {
  std::string name;    // "<module>.<property>"
  std::string module;
  bool passed = false;
  /// Measured quantity (an error, a drift, or 0/1 for yes-no properties).
  double value = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

struct InvariantOptions {
  /// Flips the sign of the Ito correction in every SPDE run of the suite.
  bool mutate_correction = false;
  std::uint64_t seed = 20240611;
};

/// Names of all checks, in report order; each appears once.
std::vector<std::string> invariant_names();

/// Runs every check. Exceptions inside a check count as a failure of that check.
std::vector<InvariantResult> run_invariants(const InvariantOptions& options = {});

}  // namespace sml
