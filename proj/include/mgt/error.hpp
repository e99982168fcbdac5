// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mgt {

// Base for every error raised by the library. The CLI maps ValidationError
// subclasses to exit code 1 and everything else to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class IndexError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class CapacityError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class AlignmentError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class CompositionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class GraphError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class DeterminismError : public Error {
 public:
  using Error::Error;
};

class FormatError : public ValidationError {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : ValidationError(what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace mgt
