#pragma once

#include <stdexcept>
#include <string>

namespace transmod {

// Error taxonomy. The CLI maps these onto exit codes:
// InputError subclasses -> 1, NumericError -> 2, VerificationError -> 3.

class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public InputError {
 public:
  using InputError::InputError;
};

class ConfigError : public InputError {
 public:
  using InputError::InputError;
};

class ContractError : public InputError {
 public:
  using InputError::InputError;
};

class SchemaError : public InputError {
 public:
  using InputError::InputError;
};

class DataError : public InputError {
 public:
  using InputError::InputError;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class VerificationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace transmod
