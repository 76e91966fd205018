#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace spatialqr {

/// Invalid numeric input, e.g. non-finite values or mismatched dimensions.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A call made without satisfying its documented precondition.
class PreconditionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised by back substitution when a diagonal entry is zero.
class SingularMatrixError : public std::runtime_error {
 public:
  SingularMatrixError(std::size_t index)
      : std::runtime_error("singular matrix: zero diagonal at index " + std::to_string(index)),
        index_(index) {}

  /// 1-based row/column of the zero pivot.
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

/// Malformed specification content (unbound names, type errors in expressions, bad JSON).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dependency cycle found while ordering the dataflow graph.
class CycleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid simulator configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A kernel produced a non-finite value during simulation or graph evaluation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Store directives did not cover the result exactly once.
class CoverageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Matrix file could not be read or parsed.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace spatialqr
