#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bilevel {

/// Requested Sobol dimension exceeds the direction-number table.
class UnsupportedDimension : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A configuration value or combination of values is not allowed.
class InvalidConfig : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An argument lies outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Operation not available for this environment (e.g. closed form of a nonlinear model).
class Unsupported : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A non-finite value appeared during evaluation. `where` names the sample or step index.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::ptrdiff_t where)
      : std::runtime_error(what + " (index " + std::to_string(where) + ")"), where_(where) {}

  std::ptrdiff_t where() const noexcept { return where_; }

 private:
  std::ptrdiff_t where_;
};

/// Conjugate gradient met a direction with <p, Ap> <= 0.
class CurvatureError : public std::runtime_error {
 public:
  CurvatureError(int iteration, double curvature)
      : std::runtime_error("non-positive curvature " + std::to_string(curvature) +
                           " at CG iteration " + std::to_string(iteration)),
        iteration_(iteration),
        curvature_(curvature) {}

  int iteration() const noexcept { return iteration_; }
  double curvature() const noexcept { return curvature_; }

 private:
  int iteration_;
  double curvature_;
};

}  // namespace bilevel
