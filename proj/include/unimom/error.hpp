#pragma once

#include <stdexcept>
#include <string>

namespace unimom {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that cannot be combined by an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation (log of a
/// negative, division by zero, NaN gradient, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data (files, panels, configs).
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace unimom
