#include "cwc/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cwc/errors.hpp"

namespace cwc {

IltSchedule IltSchedule::from_plateaus(std::vector<std::size_t> plateaus) {
  IltSchedule schedule;
  schedule.start_epoch.assign(plateaus.size(), 0);
  schedule.max_epoch = plateaus.empty() ? 0 : *std::max_element(plateaus.begin(), plateaus.end());
  schedule.plateau_epoch = std::move(plateaus);
  return schedule;
}

std::size_t IltSchedule::last_training_epoch() const {
  return plateau_epoch.empty() ? 0 : *std::max_element(plateau_epoch.begin(), plateau_epoch.end());
}

std::size_t fast_mode_start(std::size_t predecessor_plateau, std::size_t overlap) {
  return predecessor_plateau > overlap ? predecessor_plateau - overlap : 0;
}

void IltSchedule::validate(std::size_t layers) const {
  if (start_epoch.size() != layers || plateau_epoch.size() != layers) {
    throw ConfigError("schedule lists " + std::to_string(start_epoch.size()) + " start and " +
                      std::to_string(plateau_epoch.size()) + " plateau epochs for " +
                      std::to_string(layers) + " layers");
  }
  for (std::size_t i = 0; i < layers; ++i) {
    if (start_epoch[i] > plateau_epoch[i] || plateau_epoch[i] > max_epoch) {
      throw ConfigError("layer " + std::to_string(i + 1) + ": schedule needs start (" +
                        std::to_string(start_epoch[i]) + ") <= plateau (" +
                        std::to_string(plateau_epoch[i]) + ") <= max epoch (" +
                        std::to_string(max_epoch) + ")");
    }
    if (fast_mode && i > 0 &&
        start_epoch[i] != fast_mode_start(plateau_epoch[i - 1], overlap)) {
      throw ConfigError("layer " + std::to_string(i + 1) + ": fast mode start " +
                        std::to_string(start_epoch[i]) + " != predecessor plateau " +
                        std::to_string(plateau_epoch[i - 1]) + " - overlap " +
                        std::to_string(overlap));
    }
  }
}

bool detect_plateau(std::span<const double> history, std::size_t window, double min_delta) {
  if (window == 0 || history.size() <= window) {
    return false;
  }
  const auto split = history.end() - static_cast<std::ptrdiff_t>(window);
  const double before = *std::min_element(history.begin(), split);
  const double recent = *std::min_element(split, history.end());
  if (recent >= before) {
    return true;
  }
  if (before <= 0.0) {
    return before - recent < min_delta;
  }
  const double per_epoch = 1.0 - std::pow(recent / before, 1.0 / static_cast<double>(window));
  return per_epoch < min_delta;
}

}  // namespace cwc
