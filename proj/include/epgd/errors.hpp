#pragma once

#include <stdexcept>
#include <string>

namespace epgd {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input or layer dimensions do not chain.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class LabelError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Caller broke a documented precondition of a state transition.
class ContractError : public Error {
 public:
  using Error::Error;
};

class DecodeError : public Error {
 public:
  using Error::Error;
};

class UnsupportedFormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace epgd
