// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace usrn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precondition or parameter validation failure.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class FileNotFound : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed, truncated or size-mismatched file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Unknown key or ill-typed value in a run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf in data or in a training loss.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace usrn
