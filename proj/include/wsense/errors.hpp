#pragma once

#include <stdexcept>
#include <string>

namespace wsense {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape/extent contract violated.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, out-of-range labels, degenerate inputs.
class ValueError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration (window too short for pool depth, bad overlap, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Operation called in the wrong state (e.g. backward before forward).
class StateError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace wsense
