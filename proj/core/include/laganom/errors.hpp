#pragma once

#include <stdexcept>
#include <string>

namespace laganom {

enum class ErrorKind {
  ragged_row,            // structurally inconsistent input row
  parse,                 // non-numeric or malformed cell
  gap,                   // missing / non-finite value in a panel
  instability,           // explosive generator recursion
  insufficient_history,  // fewer observations than the lag window needs
  convergence,           // solver did not converge within max_iter
  degenerate_dof,        // h - m <= 0, sigma undefined
  singular_system,       // dense linear solve failed
  degenerate_weight,     // zero entry where a reciprocal is required
  incompatible_design,   // model / design column indexing mismatch
  invalid_scale,         // sigma <= 0 handed to a t-test
  arity,                 // empty or wrongly-sized sample set
  shape,                 // point/vector dimension mismatch
  degenerate_samples,    // zero-variance samples handed to a KDE
  degenerate_range,      // max_eps <= min_eps
  undefined_f1,          // tp = fp = fn = 0, or no positive labels
  missing_labels,        // operation requires a labeled panel
  empty_input,           // n = 0 or h = 0
  validation,            // config-level consistency failure
  invalid_argument,      // generic precondition violation
  io,                    // file could not be opened / written
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

/// Solver non-convergence, carrying the last duality-gap estimate.
class ConvergenceError : public Error {
public:
  ConvergenceError(const std::string& message, double duality_gap)
      : Error(ErrorKind::convergence, message), duality_gap_(duality_gap) {}

  double duality_gap() const noexcept { return duality_gap_; }

private:
  double duality_gap_;
};

}  // namespace laganom
