#pragma once

#include <stdexcept>
#include <string>

namespace dannet {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or grid dimensions that do not fit an operation's contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A configuration invariant was violated; the message names the field.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input with nothing to average over (e.g. every pixel ignored).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Missing or malformed files on disk.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace dannet
