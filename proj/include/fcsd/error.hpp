#pragma once

#include <stdexcept>
#include <string>

namespace fcsd {

// Failure classes. The CLI maps them onto exit codes 1/2/3.
enum class ErrorKind { validation, infeasible, numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Bad input data, bad arguments, schema problems.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(ErrorKind::validation, what) {}
};

// Argument outside the mathematical domain of an operation (e.g. a quantile level of 1.2).
class DomainError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// D + R = 0: the aggregated frequency model has no synchronizing gain.
class DegenerateSystemError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// The model has no feasible point (QP infeasible, structural shortage, empty nadir region).
class InfeasibleError : public Error {
 public:
  explicit InfeasibleError(const std::string& what) : Error(ErrorKind::infeasible, what) {}
};

// No sampled (H, D) point meets the nadir limit, even with every RES/ESS at its upper bound.
class EmptyRegionError : public InfeasibleError {
 public:
  using InfeasibleError::InfeasibleError;
};

// Non-finite state, failed factorization, etc.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

}  // namespace fcsd
