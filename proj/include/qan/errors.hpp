#pragma once

#include <stdexcept>
#include <string>

namespace qan {

/// Invalid argument to a pure function (bad probability, non-divisible length, ...).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Inconsistent simulation or receiver setup (overlapping slots, gate too wide).
class ConfigurationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input record (event file, tally CSV, code file).
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A measurement cannot be formed from the data (e.g. zero baseline counts).
class MeasurementError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace qan
