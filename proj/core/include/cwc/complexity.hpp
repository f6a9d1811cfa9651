#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cwc/network.hpp"

namespace cwc {

struct LayerComplexity {
  std::string name;
  Shape4 output;
  std::size_t conv_parameters = 0;
  std::size_t batchnorm_parameters = 0;
  std::uint64_t mult_adds = 0;
};

/// Counts for one input sample.
///
/// Mult-adds: one per multiply-accumulate, biases excluded. A conv layer
/// costs out_h * out_w * c_out * (c_in / groups) * k^2; the softmax head
/// costs flatten * J.
struct ComplexityReport {
  std::vector<LayerComplexity> layers;
  std::size_t softmax_head_parameters = 0;
  std::uint64_t softmax_head_mult_adds = 0;
  std::size_t goodness_head_parameters = 0;
  std::uint64_t goodness_head_mult_adds = 0;

  [[nodiscard]] std::size_t total_parameters() const;
  [[nodiscard]] std::uint64_t total_mult_adds() const;
};

inline constexpr const char* kMultAddConvention =
    "one mult-add per multiply-accumulate, per single input sample, biases excluded";

ComplexityReport count_complexity(const NetworkConfig& config);

/// Convolution, BatchNorm (gamma and beta) and predictor-head parameters.
std::size_t count_parameters(const NetworkConfig& config);
std::uint64_t count_mult_adds(const NetworkConfig& config);

}  // namespace cwc
