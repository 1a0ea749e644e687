#pragma once

#include <stdexcept>
#include <string>

namespace ddic {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// An input file does not follow its format.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Two inputs that must agree (e.g. image and label files) do not.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

/// Bad or missing configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Training diverged (non-finite loss) or otherwise could not proceed.
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Filesystem read/write failure.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace ddic
