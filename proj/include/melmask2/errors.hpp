#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace melmask2 {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad construction parameters (window lengths, band counts, SNR lists, ...).
struct InvalidConfigError : Error {
  using Error::Error;
};

// Well-formed call, unacceptable data (shape mismatch, out-of-range values).
struct InvalidInputError : Error {
  using Error::Error;
};

// Malformed or unsupported file content. `offset` is the byte position at
// which parsing gave up, when known.
struct FormatError : Error {
  explicit FormatError(const std::string& what, std::size_t offset = 0)
      : Error(what), offset(offset) {}
  std::size_t offset = 0;
};

// Non-finite values where finite ones are required.
struct NumericError : Error {
  using Error::Error;
};

// Streaming state used before initialization or across mismatched configs.
struct StateError : Error {
  using Error::Error;
};

// Training diverged; `step` is the offending optimizer step.
struct TrainingError : Error {
  explicit TrainingError(const std::string& what, std::size_t step)
      : Error(what + " (step " + std::to_string(step) + ")"), step(step) {}
  std::size_t step = 0;
};

}  // namespace melmask2
