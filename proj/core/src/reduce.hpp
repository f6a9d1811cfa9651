#pragma once

#include <array>
#include <cstddef>
#include <span>

namespace cwc::detail {

// Double-precision sums with independent partial accumulators so the adds
// pipeline; results differ from a serial sum only by reassociation.
inline constexpr std::size_t kLanes = 8;

template <typename T>
double sum(std::span<const T> values) {
  std::array<double, kLanes> acc{};
  std::size_t i = 0;
  for (; i + kLanes <= values.size(); i += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) {
      acc[l] += static_cast<double>(values[i + l]);
    }
  }
  double total = 0.0;
  for (double a : acc) {
    total += a;
  }
  for (; i < values.size(); ++i) {
    total += static_cast<double>(values[i]);
  }
  return total;
}

template <typename T>
double sum_squares(std::span<const T> values, double center = 0.0) {
  std::array<double, kLanes> acc{};
  std::size_t i = 0;
  for (; i + kLanes <= values.size(); i += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) {
      const double d = static_cast<double>(values[i + l]) - center;
      acc[l] += d * d;
    }
  }
  double total = 0.0;
  for (double a : acc) {
    total += a;
  }
  for (; i < values.size(); ++i) {
    const double d = static_cast<double>(values[i]) - center;
    total += d * d;
  }
  return total;
}

}  // namespace cwc::detail
