#pragma once

#include <stdexcept>
#include <string>

namespace idm {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the domain of a function (e.g. age outside a knot grid).
class DomainError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// Interval endpoints given in the wrong order.
class OrderingError : public Error {
 public:
  using Error::Error;
};

// Non-finite intermediate value during likelihood or probability evaluation.
class NumericError : public Error {
 public:
  using Error::Error;
};

class UnsupportedError : public Error {
 public:
  using Error::Error;
};

// Malformed configuration or input schema.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// File missing, unreadable or unwritable.
class IoError : public Error {
 public:
  using Error::Error;
};

// Contradictory observations for one subject.
class ConflictError : public Error {
 public:
  using Error::Error;
};

}  // namespace idm
