#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sml {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fields, grids or increments with incompatible sizes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A numeric parameter outside its admissible range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Zero field where a nonzero one is required (normalization, projection).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Noise basis violating the summability/regularity requirements.
class HypothesisError : public Error {
 public:
  using Error::Error;
};

/// More noise modes than the grid can resolve.
class AliasingError : public Error {
 public:
  using Error::Error;
};

/// Invalid run configuration (schema, unknown keys, missing data).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values appeared during time stepping.
class BlowUpError : public Error {
 public:
  BlowUpError(std::size_t step, const std::string& what)
      : Error("blow-up at step " + std::to_string(step) + ": " + what), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace sml
