#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace shiftlab {

// Bad input: malformed files, violated preconditions, shape mismatches.
// The CLI maps these to exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A well-formed request that could not be computed. CLI exit code 2.
class ComputationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DivergenceError : public ComputationError {
 public:
  DivergenceError(std::size_t epoch, const std::string& what)
      : ComputationError("training diverged in epoch " + std::to_string(epoch) + ": " + what),
        epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

class CapExceededError : public ComputationError {
 public:
  using ComputationError::ComputationError;
};

// KL divergence is +inf because the second argument lacks support.
class InfiniteDivergenceError : public ComputationError {
 public:
  using ComputationError::ComputationError;
};

}  // namespace shiftlab
