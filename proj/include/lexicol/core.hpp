#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace lexicol {

using NodeId = std::uint32_t;
using ClassId = std::int32_t;

inline constexpr ClassId kUnknownLabel = -1;

// Error hierarchy. The CLI maps errors caused by the inputs (ValidationError,
// DomainError, DimensionError) to exit code 1 and everything else to 2.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Input violates a documented invariant or precondition.
class ValidationError : public Error {
public:
  using Error::Error;
};

/// Malformed on-disk data; the message names the file and line.
class FormatError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

/// A formula was evaluated outside its domain.
class DomainError : public Error {
public:
  using Error::Error;
};

class DimensionError : public Error {
public:
  using Error::Error;
};

/// Iterative solver breakdown (non-finite values).
class SolverError : public Error {
public:
  SolverError(const std::string& what, std::size_t iteration)
      : Error(what + " at iteration " + std::to_string(iteration)), iteration_(iteration) {}

  std::size_t iteration() const noexcept { return iteration_; }

private:
  std::size_t iteration_;
};

class TrainingError : public Error {
public:
  TrainingError(const std::string& what, std::size_t epoch)
      : Error(what + " at epoch " + std::to_string(epoch)), epoch_(epoch) {}

  std::size_t epoch() const noexcept { return epoch_; }

private:
  std::size_t epoch_;
};

}  // namespace lexicol
