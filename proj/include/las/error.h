#pragma once

#include <stdexcept>
#include <string>

namespace las {

// Base for everything thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad flags, bad config keys, invalid hyperparameters. CLI exit code 1.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Shape disagreement between tensors.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Malformed or missing caller-supplied data (empty sequences, bad manifests).
class InputError : public Error {
 public:
  using Error::Error;
};

// Token id outside the vocabulary.
class VocabError : public Error {
 public:
  using Error::Error;
};

// Filesystem and file-format failures.
class IoError : public Error {
 public:
  using Error::Error;
};

// Checkpoint validation failures (bad magic, shape or config mismatch).
class CheckpointError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones are required. CLI exit code 3.
class NumericError : public Error {
 public:
  using Error::Error;
};

// CLI exit codes: 0 ok, 1 usage, 2 data error, 3 numeric failure.
int exit_code_for(const Error& e);

}  // namespace las
