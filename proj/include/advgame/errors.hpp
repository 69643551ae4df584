#pragma once

#include <stdexcept>
#include <string>

namespace advgame {

// Error taxonomy. Each class maps to one CLI exit code (see cli.cpp).

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An operation was called in the wrong state (e.g. backward without a recorded forward).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or a singular configuration surfaced during computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration (unsupported norm, bad hyperparameter, unknown family...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Invalid data handed to an operation (label out of range, point outside the cube...).
class InputError : public Error {
 public:
  using Error::Error;
};

/// File could not be read, written or parsed.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace advgame
