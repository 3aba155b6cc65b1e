#pragma once

#include <stdexcept>
#include <string>

namespace edgefall {

// Every error thrown by the toolkit derives from Error. The CLI maps the
// three families below onto its documented exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or flags (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Bad or missing input data, model files, shapes (exit code 3).
class DataError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

class ParseError : public DataError {
 public:
  using DataError::DataError;
};

class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

class AlignmentError : public DataError {
 public:
  using DataError::DataError;
};

// Model file problems. The three subclasses are distinguishable so callers
// can tell a stale file from a damaged one.
class LoadError : public DataError {
 public:
  using DataError::DataError;
};

class VersionMismatchError : public LoadError {
 public:
  using LoadError::LoadError;
};

class TruncatedFileError : public LoadError {
 public:
  using LoadError::LoadError;
};

class ShapeInconsistencyError : public LoadError {
 public:
  using LoadError::LoadError;
};

// Divergence during training (exit code 4).
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace edgefall
