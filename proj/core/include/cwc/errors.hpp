#pragma once

#include <stdexcept>
#include <string>

namespace cwc {

/// Invalid network, layer or run configuration (shapes, divisibility, keys).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or unreadable data file (IDX, CIFAR-10, checkpoint).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite loss, activation or gradient.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cwc
