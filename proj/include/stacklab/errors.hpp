#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace stacklab {

// Caller violated a precondition (dimension mismatch, empty batch, ...).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Floating-point failure: non-finite result or an iterative scheme that did
// not converge.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when an inverse is requested for a matrix whose smallest singular
// value is below the relative tolerance.
class SingularMatrix : public NumericError {
 public:
  SingularMatrix(double sigma_min, double sigma_max, std::string context = {});

  double sigma_min() const { return sigma_min_; }
  double sigma_max() const { return sigma_max_; }

  // Returns a copy whose message is prefixed with the stage index.
  SingularMatrix at_stage(std::size_t stage) const;

 private:
  double sigma_min_;
  double sigma_max_;
};

// The perturbation budget alpha only exists for kappa > 9.
class AlphaUndefined : public std::domain_error {
 public:
  explicit AlphaUndefined(double kappa);
};

// Invalid experiment configuration (maps to CLI exit code 2).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace stacklab
