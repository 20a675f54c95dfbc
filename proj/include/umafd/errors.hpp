#pragma once

#include <stdexcept>
#include <string>

namespace umafd {

/// Base of every error raised by the library. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FileError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A loss term or gradient became NaN/Inf during training.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace umafd
