#pragma once

#include <stdexcept>
#include <string>

namespace tsae {

// Error categories map onto the CLI exit-code contract:
// IoError -> 2, NumericalError -> 3, ShapeError/ConfigError -> 4.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace tsae
