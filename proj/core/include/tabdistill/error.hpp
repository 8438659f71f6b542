#pragma once

#include <stdexcept>
#include <string>

namespace tabdistill {

/// Raised for malformed inputs: bad shapes, out-of-range parameters, unknown
/// config keys. Maps to CLI exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a computation produces NaN or Inf. The message carries the
/// location (outer step, model, inner step or epoch). Maps to CLI exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for unreadable or unwritable files.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tabdistill
