#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cwc/goodness.hpp"
#include "cwc/network.hpp"

namespace cwc::cli {

/// Mean over one class's channel subset of a layer's ReLU output.
struct FeatureMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> values;

  [[nodiscard]] double mean() const;
};

/// layers x J maps for one input sample.
struct FeatureGrid {
  /// maps[layer][class]
  std::vector<std::vector<FeatureMap>> maps;

  [[nodiscard]] std::size_t layers() const { return maps.size(); }
  [[nodiscard]] std::size_t classes() const { return maps.empty() ? 0 : maps.front().size(); }
  /// Class whose map has the largest mean in `layer` (lowest index on ties).
  [[nodiscard]] ClassIndex dominant_class(std::size_t layer) const;
};

/// `sample` is a single (1, c, h, w) standardized input.
FeatureGrid feature_grid(const Network& network, const FeatureTensor& sample);

/// Min-max scaled to 0..255; a constant map becomes all zeros.
std::vector<std::uint8_t> scale_to_gray(const FeatureMap& map);

/// Binary portable graymap (P5, maxval 255).
std::string encode_pgm(const FeatureMap& map);

/// Writes layer<L>_class<J>.pgm for every map (1-based layer numbers,
/// 0-based classes) and index.txt; returns the image paths.
std::vector<std::filesystem::path> write_feature_grid(const FeatureGrid& grid,
                                                      const std::filesystem::path& directory,
                                                      std::size_t sample_index,
                                                      ClassIndex label);

}  // namespace cwc::cli
