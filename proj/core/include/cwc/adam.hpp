#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace cwc {

struct AdamConfig {
  float learning_rate = 0.01f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;

  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

/// One parameter array and its gradient.
struct ParameterSlot {
  std::span<float> values;
  std::span<const float> grads;
};

/// Moment estimates for a fixed list of parameter arrays; `first[i]` and
/// `second[i]` are shaped like slot i.
struct AdamState {
  AdamConfig config;
  std::vector<std::vector<float>> first;
  std::vector<std::vector<float>> second;
  std::uint64_t steps = 0;

  AdamState() = default;
  AdamState(std::span<const std::size_t> slot_sizes, AdamConfig config);
};

/// Bias-corrected Adam update; `steps` advances by exactly one. Throws
/// NumericalError naming `owner` if any gradient is non-finite, before any
/// parameter is touched.
void adam_step(std::span<const ParameterSlot> slots, AdamState& state, std::string_view owner);

}  // namespace cwc
