#pragma once

#include <stdexcept>

namespace sctlab {

inline constexpr const char* kToolVersion = "0.1.0";

/// Operand shapes are incompatible.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Out-of-range index (embedding rows, agent ids, timesteps).
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// A value became NaN or infinite.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operation invalid for the current simulator state.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed, truncated or incompatible file.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sctlab
