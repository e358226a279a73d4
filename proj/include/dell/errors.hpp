#pragma once

#include <stdexcept>
#include <string>

namespace dell {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text or binary file.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A value violates a documented invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Tensor or sequence has the wrong dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Training produced non-finite values.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Not enough samples, games or classes for the request.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

class OverflowError : public Error {
 public:
  using Error::Error;
};

}  // namespace dell
