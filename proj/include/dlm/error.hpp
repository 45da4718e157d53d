#pragma once

#include <stdexcept>
#include <string>

namespace dlm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes of operands disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of an operation (log of a
// non-positive value, non-positive scale, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf produced during a forward or backward computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Caller violated a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Malformed input file or stream.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace dlm
