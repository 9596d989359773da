#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace tvdpm {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value violates a documented invariant or precondition.
class ConstraintViolation : public Error {
 public:
  using Error::Error;
};

/// The request is too large for an exact (enumerative) computation.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// The operation is not defined for the given model, kernel or policy.
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// Configuration file failed validation.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Every particle weight collapsed to zero.
class DegeneracyError : public Error {
 public:
  DegeneracyError(std::int64_t time, const std::string& what)
      : Error("particle degeneracy at t=" + std::to_string(time) + ": " + what), time_(time) {}

  std::int64_t time() const { return time_; }

 private:
  std::int64_t time_;
};

}  // namespace tvdpm
