#ifndef LQRPI_ERRORS_HPP
#define LQRPI_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace lqrpi {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent matrix shapes or vector lengths.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid arguments that are not shape problems (bad tolerances, S not
/// positive definite, malformed configuration, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Eigen-solver failure, singular linear system, non-convergence.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A closed-loop matrix whose spectral radius is not below one.
class NotStableError : public NumericError {
 public:
  NotStableError(const std::string& what, double rho)
      : NumericError(what + " (spectral radius " + std::to_string(rho) + ")"),
        rho_(rho) {}

  double spectral_radius() const noexcept { return rho_; }

 private:
  double rho_;
};

/// A gain K for which A - BK is not Schur stable.
class NotStabilizingError : public NotStableError {
 public:
  using NotStableError::NotStableError;
};

/// The uu block of a partitioned quadratic cannot be inverted reliably.
class SingularBlockError : public NumericError {
 public:
  SingularBlockError(const std::string& what, double condition)
      : NumericError(what), condition_(condition) {}

  double condition() const noexcept { return condition_; }

 private:
  double condition_;
};

}  // namespace lqrpi

#endif  // LQRPI_ERRORS_HPP
