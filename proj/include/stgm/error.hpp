// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace stgm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or sequence shapes disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Model, graph or run configuration is invalid.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// User-supplied data violates a precondition (too short, out of range, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

/// A file could not be parsed, or carries an unsupported format version.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// An artifact was written by an incompatible format or model configuration.
class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// A required file or directory is missing.
class PathError : public Error {
 public:
  using Error::Error;
};

/// A non-finite value appeared during a computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace stgm
