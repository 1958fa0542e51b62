#pragma once

#include <stdexcept>
#include <string>

namespace croptime {

// Caller-fixable problems: bad configuration, malformed files, invalid
// arguments. The CLI maps these to exit code 1.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Failures that occur while computing on valid inputs (divergence,
// non-finite values, ...). The CLI maps these to exit code 2.
struct ComputeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : ValidationError {
  using ValidationError::ValidationError;
};

// Text-format problem; message carries the 1-based line number when known.
struct ParseError : ValidationError {
  using ValidationError::ValidationError;
};

struct SchemaError : ValidationError {
  using ValidationError::ValidationError;
};

struct SplitError : ValidationError {
  using ValidationError::ValidationError;
};

struct ModelFormatError : ValidationError {
  using ValidationError::ValidationError;
};

struct WindowError : ValidationError {
  using ValidationError::ValidationError;
};

struct InferenceError : ComputeError {
  using ComputeError::ComputeError;
};

struct NumericError : ComputeError {
  using ComputeError::ComputeError;
};

struct TrainingError : ComputeError {
  using ComputeError::ComputeError;
};

}  // namespace croptime
