#pragma once

#include <cstdint>
#include <random>

#include "cwc/datasets.hpp"
#include "cwc/network.hpp"

namespace cwc::testing {

// Class j brightens row j of a (1, side, side) image on top of noise.
// Labels cycle 0..classes-1, so every split is balanced.
inline Dataset striped_dataset(std::size_t count, std::size_t classes, std::size_t side,
                               std::uint64_t seed, Split split = Split::Train) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> noise(0, 60);
  Dataset d;
  d.name = "striped";
  d.split = split;
  d.classes = classes;
  d.images = FeatureTensor(Shape4{count, 1, side, side});
  d.raw.resize(count * side * side);
  d.labels.resize(count);
  for (std::size_t n = 0; n < count; ++n) {
    const auto label = static_cast<ClassIndex>(n % classes);
    d.labels[n] = label;
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        int v = noise(rng);
        if (y % classes == label) {
          v += 180;
        }
        const std::size_t at = (n * side + y) * side + x;
        d.raw[at] = static_cast<std::uint8_t>(v);
        d.images.data()[at] = static_cast<float>(v) / 255.0f;
      }
    }
  }
  return d;
}

// Two small layers (one plain, one grouped) for fast trainer tests.
inline NetworkConfig tiny_config(std::size_t classes, std::size_t side) {
  NetworkConfig config;
  config.input = {1, side, side};
  config.classes = classes;
  LayerSpec first;
  first.out_channels = 2 * classes;
  LayerSpec second;
  second.out_channels = 4 * classes;
  second.grouped = true;
  second.maxpool_after = true;
  config.layers = {first, second};
  config.schedule = IltSchedule::from_plateaus({2, 4});
  config.batch_size = 16;
  config.goodness_head.hidden = 16;
  return config;
}

}  // namespace cwc::testing
