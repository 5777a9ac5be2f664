#pragma once

#include <stdexcept>
#include <string>

namespace dced {

// Shape or dimension contract violation (mismatched tensors, zero dims, ...).
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Config file problems; carries the offending line when known.
struct ConfigError : std::runtime_error {
  int line = 0;
  explicit ConfigError(const std::string& msg, int line_no = 0)
      : std::runtime_error(line_no > 0 ? "line " + std::to_string(line_no) + ": " + msg : msg),
        line(line_no) {}
};

// Filesystem / stream failures; message names the failing path.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Checkpoint load failures (bad magic, version mismatch, truncation).
struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training aborted because the loss left the finite range.
struct NonFiniteLossError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A finite-difference oracle hit a non-finite function value.
struct OracleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dced
