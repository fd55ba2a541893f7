#pragma once

#include <stdexcept>
#include <string>

namespace kzlab {

// A requested object would exceed a configured size cap.
class ResourceLimitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The requested feature exists for some dimensions/modes only.
class UnsupportedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical instability detected during time stepping.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An input (moment, mode, quadruplet) required by an evaluator is absent.
class MissingDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace kzlab
