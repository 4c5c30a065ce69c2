#pragma once

#include <stdexcept>
#include <string>

namespace fcre {

// Base of every error the library throws deliberately.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Operand shapes do not line up (matmul mismatch, misaligned batches, ...).
struct ShapeError : Error {
  using Error::Error;
};

// Invalid or infeasible configuration (empty corpus, not enough relations,
// all parameter groups frozen, ...).
struct ConfigError : Error {
  using Error::Error;
};

// Mathematically degenerate input (zero-norm vector where a direction is
// required).
struct DegenerateInputError : Error {
  using Error::Error;
};

// Non-finite value where a finite one is required.
struct NumericError : Error {
  using Error::Error;
};

// Malformed input file; message names the offending line where possible.
struct ParseError : Error {
  using Error::Error;
};

// Out-of-range label or relation id.
struct IndexError : Error {
  using Error::Error;
};

// Violation of the continual-learning protocol (relation collision,
// incomplete accuracy matrix, missing prototype for a seen relation).
struct ProtocolError : Error {
  using Error::Error;
};

// A whole experiment run failed; message names the seed.
struct ExperimentError : Error {
  using Error::Error;
};

}  // namespace fcre
