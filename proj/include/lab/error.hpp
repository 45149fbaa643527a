#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lab {

// Caller violated a documented precondition (bad parameter, point outside domain).
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Evaluation at a pole of a kernel or vector field.
class SingularityError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Iterative solve that stopped short of its tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double best_residual)
      : std::runtime_error(what), best_residual_(best_residual) {}
  double best_residual() const { return best_residual_; }

 private:
  double best_residual_;
};

// Adaptive refinement hit its depth limit before the point was swallowed.
class StepUnderflowError : public std::runtime_error {
 public:
  StepUnderflowError(const std::string& what, std::size_t point)
      : std::runtime_error(what), point_(point) {}
  std::size_t point() const { return point_; }

 private:
  std::size_t point_;
};

// A numerical safeguard tripped (censoring, horizon, factorization).
class DiagnosticError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lab
