#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace smtl {

// Shape disagreement between operands.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Numeric domain violation, e.g. log of a non-positive value.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Caller broke an operation precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed file content. The message carries "path:line: field" location.
class ParseError : public DataError {
 public:
  using DataError::DataError;
};

// Well-formed file whose content disagrees with its manifest or with the
// experiment it is used in.
class ValidationError : public DataError {
 public:
  using DataError::DataError;
};

// Checkpoint or artifact that cannot be used with the current experiment.
class ArtifactError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DeterminismError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t step, const std::string& what)
      : std::runtime_error("diverged at step " + std::to_string(step) + ": " + what), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace smtl
