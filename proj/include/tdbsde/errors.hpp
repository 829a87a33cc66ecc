#pragma once

#include <stdexcept>
#include <string>

namespace tdbsde {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A time point or grid does not line up with the expected time grid.
class GridAlignmentError : public Error {
 public:
  using Error::Error;
};

/// An argument lies outside the domain of the operation (e.g. delay > horizon).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A structural constraint between constants is violated (e.g. beta <= 2*sqrt(2)*L~).
class ConstraintViolation : public Error {
 public:
  using Error::Error;
};

/// A realized increasing process decreased somewhere.
class MonotonicityViolation : public Error {
 public:
  using Error::Error;
};

/// Normal equations are singular and no ridge was requested.
class SingularSystemError : public Error {
 public:
  using Error::Error;
};

/// A weight such as exp(beta * A) overflowed or produced NaN.
class NumericOverflowError : public Error {
 public:
  using Error::Error;
};

/// A generator returned a non-finite value.
class GeneratorError : public Error {
 public:
  using Error::Error;
};

/// The backward sweep produced non-finite values.
class BlowupError : public Error {
 public:
  using Error::Error;
};

/// Picard iteration exhausted its budget without contracting.
class NonContractionError : public Error {
 public:
  using Error::Error;
};

/// The smallness conditions (H1)/(H2) failed and no override was given.
class AssumptionError : public Error {
 public:
  using Error::Error;
};

/// A member of a perturbation family is not admissible.
class FamilyInvalidError : public Error {
 public:
  using Error::Error;
};

/// Malformed experiment configuration; `path` locates the offending field
/// in JSONPath style (e.g. `$.problem.constants.beta`).
class ConfigError : public Error {
 public:
  ConfigError(std::string path, const std::string& message)
      : Error(path + ": " + message), path_(std::move(path)), message_(message) {}

  const std::string& path() const noexcept { return path_; }
  const std::string& message() const noexcept { return message_; }

 private:
  std::string path_;
  std::string message_;
};

}  // namespace tdbsde
