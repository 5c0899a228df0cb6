#pragma once

#include <stdexcept>
#include <string>

namespace tpt {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible extents, wrong rank, non-scalar backward.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Arguments outside an operation's mathematical domain (log of 0, std <= 0, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf detected while checked mode is active.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Invalid model, optimizer or run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace tpt
