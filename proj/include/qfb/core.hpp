#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace qfb {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using Complex = std::complex<double>;

// Error hierarchy. The CLI maps these onto its exit codes, so keep the
// categories coarse.

/// Bad arguments: dimension mismatch, parameter outside its domain, a
/// violated precondition.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical procedure produced something it cannot vouch for.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A steady state was requested for dynamics that have none.
class StabilityError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class InvalidUnravelling : public InputError {
 public:
  using InputError::InputError;
};

class RecoveryError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class OptimalityViolation : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Raised by the trajectory simulator; carries the offending trajectory.
class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, std::size_t trajectory)
      : NumericalError(what), trajectory_(trajectory) {}
  [[nodiscard]] std::size_t trajectory() const noexcept { return trajectory_; }

 private:
  std::size_t trajectory_;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InputError(message);
}

inline void require_square(const Matrix& m, const char* name) {
  if (m.rows() != m.cols()) {
    throw InputError(std::string(name) + " must be square, got " + std::to_string(m.rows()) +
                     "x" + std::to_string(m.cols()));
  }
}

inline Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace detail

}  // namespace qfb
