#pragma once

#include <stdexcept>
#include <string>

namespace stftr {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid parameters, inconsistent specs, unknown config keys.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// Singular systems, non-finite iterates, non-PD covariances.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  IoError(std::string array, const std::string& what)
      : Error(array.empty() ? what : "array '" + array + "': " + what), array_(std::move(array)) {}
  const std::string& array() const noexcept { return array_; }

 private:
  std::string array_;
};

}  // namespace stftr
