#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cwc {

/// Per-layer training windows for interleaved layer training.
///
/// Epochs are numbered from 1. Layer i receives updates in epoch e iff
/// start_epoch[i] <= e <= plateau_epoch[i]; a layer with plateau 0 never
/// trains.
struct IltSchedule {
  std::vector<std::size_t> start_epoch;
  std::vector<std::size_t> plateau_epoch;
  std::size_t max_epoch = 0;
  /// Epochs by which a successor's start precedes its predecessor's plateau
  /// in fast mode.
  std::size_t overlap = 3;
  bool fast_mode = false;

  /// All layers start at 0 and stop at the given plateaus; max_epoch is the
  /// largest plateau.
  static IltSchedule from_plateaus(std::vector<std::size_t> plateaus);

  [[nodiscard]] std::size_t layer_count() const { return plateau_epoch.size(); }
  [[nodiscard]] bool trains(std::size_t layer, std::size_t epoch) const {
    return epoch >= 1 && start_epoch[layer] <= epoch && epoch <= plateau_epoch[layer];
  }
  [[nodiscard]] std::size_t last_training_epoch() const;

  /// Throws ConfigError unless 0 <= start <= plateau <= max_epoch for every
  /// layer and, in fast mode, each start follows the overlap rule.
  void validate(std::size_t layers) const;

  friend bool operator==(const IltSchedule&, const IltSchedule&) = default;
};

/// start_epoch[i+1] = max(0, plateau_epoch[i] - overlap).
std::size_t fast_mode_start(std::size_t predecessor_plateau, std::size_t overlap);

struct PlateauDetector {
  std::size_t window = 3;
  double min_delta = 1e-3;

  friend bool operator==(const PlateauDetector&, const PlateauDetector&) = default;
};

/// True when the best loss of the last `window` epochs improves on the best
/// loss before them by less than `min_delta` per epoch, relative (geometric
/// mean over the window). Needs more than `window` entries.
bool detect_plateau(std::span<const double> history, std::size_t window, double min_delta);

inline bool detect_plateau(std::span<const double> history, const PlateauDetector& detector) {
  return detect_plateau(history, detector.window, detector.min_delta);
}

}  // namespace cwc
