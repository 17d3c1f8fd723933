#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace spavg {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mismatched or non-square shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid parameters (odd panel count, non-positive frequency, ...).
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

/// Non-finite value produced by a user function or an intermediate result.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// The integrator produced NaN/Inf.
class DivergenceError : public NumericError {
 public:
  DivergenceError(std::size_t step, double time)
      : NumericError("state became non-finite at step " + std::to_string(step) +
                     " (t = " + std::to_string(time) + ")"),
        step_(step),
        time_(time) {}

  [[nodiscard]] std::size_t step() const noexcept { return step_; }
  [[nodiscard]] double time() const noexcept { return time_; }

 private:
  std::size_t step_;
  double time_;
};

/// Frame violates the orthonormality / handedness constraints.
class ManifoldError : public Error {
 public:
  using Error::Error;
};

class ProjectionError : public Error {
 public:
  using Error::Error;
};

/// Singular linear system where a unique solution was expected.
class SolverError : public Error {
 public:
  using Error::Error;
};

/// A required upstream quantity (e.g. the first corrector) was not supplied.
class DependencyError : public Error {
 public:
  using Error::Error;
};

/// Not enough data to fit a decay envelope.
class FitError : public Error {
 public:
  using Error::Error;
};

/// File could not be opened, written or parsed.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace spavg
