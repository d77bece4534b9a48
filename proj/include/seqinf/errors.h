#pragma once

#include <stdexcept>
#include <string>

namespace seqinf {

// Base class for every error raised by the library. The CLI maps the
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual const char* kind() const { return "error"; }
};

// Incompatible tensor shapes or dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
  const char* kind() const override { return "shape_error"; }
};

// A precondition of an API call was violated.
class ContractError : public Error {
 public:
  using Error::Error;
  const char* kind() const override { return "contract_error"; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  const char* kind() const override { return "config_error"; }
};

// Malformed or inconsistent input data (corpora, embeddings, checkpoints).
class DataError : public Error {
 public:
  using Error::Error;
  const char* kind() const override { return "data_error"; }
};

// NaN gradients, failed gradient checks and similar numeric failures.
class NumericError : public Error {
 public:
  using Error::Error;
  const char* kind() const override { return "numeric_error"; }
};

}  // namespace seqinf
