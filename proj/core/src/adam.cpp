#include "cwc/adam.hpp"

#include <cmath>
#include <string>

#include "cwc/errors.hpp"

namespace cwc {

AdamState::AdamState(std::span<const std::size_t> slot_sizes, AdamConfig cfg) : config(cfg) {
  for (std::size_t size : slot_sizes) {
    first.emplace_back(size, 0.0f);
    second.emplace_back(size, 0.0f);
  }
}

void adam_step(std::span<const ParameterSlot> slots, AdamState& state, std::string_view owner) {
  if (slots.size() != state.first.size()) {
    throw ConfigError(std::string(owner) + ": optimizer tracks " +
                      std::to_string(state.first.size()) + " parameter arrays, step got " +
                      std::to_string(slots.size()));
  }
  for (std::size_t s = 0; s < slots.size(); ++s) {
    const auto& slot = slots[s];
    if (slot.values.size() != slot.grads.size() || slot.values.size() != state.first[s].size()) {
      throw ConfigError(std::string(owner) + ": parameter array " + std::to_string(s) +
                        " has " + std::to_string(slot.values.size()) + " values, " +
                        std::to_string(slot.grads.size()) + " gradients, optimizer expects " +
                        std::to_string(state.first[s].size()));
    }
    for (float g : slot.grads) {
      if (!std::isfinite(g)) {
        throw NumericalError(std::string(owner) + ": non-finite gradient");
      }
    }
  }

  ++state.steps;
  const auto& cfg = state.config;
  const double t = static_cast<double>(state.steps);
  const auto first_correction = static_cast<float>(1.0 - std::pow(double{cfg.beta1}, t));
  const auto second_correction = static_cast<float>(1.0 - std::pow(double{cfg.beta2}, t));

  for (std::size_t s = 0; s < slots.size(); ++s) {
    auto values = slots[s].values;
    auto grads = slots[s].grads;
    auto& m = state.first[s];
    auto& v = state.second[s];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const float g = grads[i];
      m[i] = cfg.beta1 * m[i] + (1.0f - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0f - cfg.beta2) * g * g;
      const float m_hat = m[i] / first_correction;
      const float v_hat = v[i] / second_correction;
      values[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

}  // namespace cwc
