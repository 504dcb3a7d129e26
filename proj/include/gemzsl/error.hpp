#pragma once

#include <stdexcept>
#include <string>

namespace gemzsl {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An API called outside its contract (empty sets, bad indices, ...).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration values or unknown configuration keys.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf detected in values, gradients or parameters.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Problems with on-disk datasets and checkpoints.
class DataError : public Error {
 public:
  using Error::Error;
};

class VersionError : public DataError {
 public:
  using DataError::DataError;
};

class TruncatedBlobError : public DataError {
 public:
  using DataError::DataError;
};

class ChecksumError : public DataError {
 public:
  using DataError::DataError;
};

/// Synthetic generation could not satisfy its constraints.
class GenerationError : public Error {
 public:
  using Error::Error;
};

}  // namespace gemzsl
