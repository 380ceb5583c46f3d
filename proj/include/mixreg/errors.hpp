#ifndef MIXREG_ERRORS_HPP
#define MIXREG_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace mixreg {

/// Malformed or inconsistent input data (bad CSV, dimension mismatch, ...).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical failure (degenerate covariance, singular design, collapsed fit, ...).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

class DegenerateCovarianceError : public NumericalError {
 public:
  explicit DegenerateCovarianceError(const std::string& msg) : NumericalError(msg) {}
};

class SingularDesignError : public NumericalError {
 public:
  explicit SingularDesignError(const std::string& msg) : NumericalError(msg) {}
};

class ComponentCollapseError : public NumericalError {
 public:
  explicit ComponentCollapseError(const std::string& msg) : NumericalError(msg) {}
};

/// Every restart of an EM run failed; carries per-restart diagnostics in the message.
class FitFailedError : public NumericalError {
 public:
  explicit FitFailedError(const std::string& msg) : NumericalError(msg) {}
};

}  // namespace mixreg

#endif  // MIXREG_ERRORS_HPP
