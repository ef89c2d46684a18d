#pragma once

#include <stdexcept>
#include <string>

namespace mas {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible extents passed to an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A value outside the range its contract allows (class IDs, token IDs, ...).
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Malformed or mismatched file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace mas
