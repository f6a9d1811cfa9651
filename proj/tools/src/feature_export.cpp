#include "cwc/cli/feature_export.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "cwc/errors.hpp"

namespace cwc::cli {

namespace fs = std::filesystem;

double FeatureMap::mean() const {
  if (values.empty()) {
    return 0.0;
  }
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

ClassIndex FeatureGrid::dominant_class(std::size_t layer) const {
  const auto& row = maps.at(layer);
  ClassIndex best = 0;
  for (std::size_t j = 1; j < row.size(); ++j) {
    if (row[j].mean() > row[best].mean()) {
      best = static_cast<ClassIndex>(j);
    }
  }
  return best;
}

FeatureGrid feature_grid(const Network& network, const FeatureTensor& sample) {
  if (sample.n() != 1) {
    throw ConfigError("feature export takes one sample, got " + sample.shape().to_string());
  }
  const std::size_t classes = network.config().classes;
  const InferenceResult inferred = network.infer(sample, true);
  FeatureGrid grid;
  for (const FeatureTensor& activation : inferred.activations) {
    const std::size_t subset = activation.c() / classes;
    std::vector<FeatureMap> row(classes);
    for (std::size_t j = 0; j < classes; ++j) {
      FeatureMap& map = row[j];
      map.height = activation.h();
      map.width = activation.w();
      map.values.assign(activation.h() * activation.w(), 0.0f);
      for (std::size_t s = 0; s < subset; ++s) {
        auto plane = activation.plane(0, j * subset + s);
        for (std::size_t i = 0; i < plane.size(); ++i) {
          map.values[i] += plane[i];
        }
      }
      for (float& v : map.values) {
        v /= static_cast<float>(subset);
      }
    }
    grid.maps.push_back(std::move(row));
  }
  return grid;
}

std::vector<std::uint8_t> scale_to_gray(const FeatureMap& map) {
  std::vector<std::uint8_t> gray(map.values.size(), 0);
  if (map.values.empty()) {
    return gray;
  }
  const auto [lo, hi] = std::minmax_element(map.values.begin(), map.values.end());
  const double range = static_cast<double>(*hi) - static_cast<double>(*lo);
  if (!(range > 0.0)) {
    return gray;
  }
  for (std::size_t i = 0; i < gray.size(); ++i) {
    const double t = (static_cast<double>(map.values[i]) - *lo) / range;
    gray[i] = static_cast<std::uint8_t>(std::clamp(t * 255.0 + 0.5, 0.0, 255.0));
  }
  return gray;
}

std::string encode_pgm(const FeatureMap& map) {
  const std::vector<std::uint8_t> gray = scale_to_gray(map);
  std::string out = "P5\n" + std::to_string(map.width) + " " + std::to_string(map.height) +
                    "\n255\n";
  out.append(gray.begin(), gray.end());
  return out;
}

std::vector<fs::path> write_feature_grid(const FeatureGrid& grid, const fs::path& directory,
                                         std::size_t sample_index, ClassIndex label) {
  fs::create_directories(directory);
  std::ofstream index(directory / "index.txt", std::ios::trunc);
  if (!index) {
    throw DataError("cannot write " + (directory / "index.txt").string());
  }
  index << "sample = " << sample_index << "\nlabel = " << label << "\nlayers = "
        << grid.layers() << "\nclasses = " << grid.classes() << "\n\n"
        << "# file layer class subset_mean\n";

  std::vector<fs::path> written;
  for (std::size_t l = 0; l < grid.layers(); ++l) {
    for (std::size_t j = 0; j < grid.classes(); ++j) {
      const std::string name =
          "layer" + std::to_string(l + 1) + "_class" + std::to_string(j) + ".pgm";
      const fs::path path = directory / name;
      std::ofstream file(path, std::ios::binary | std::ios::trunc);
      const std::string pgm = encode_pgm(grid.maps[l][j]);
      file.write(pgm.data(), static_cast<std::streamsize>(pgm.size()));
      if (!file) {
        throw DataError("cannot write " + path.string());
      }
      char mean[32];
      std::snprintf(mean, sizeof mean, "%.6g", grid.maps[l][j].mean());
      index << name << ' ' << l + 1 << ' ' << j << ' ' << mean << '\n';
      written.push_back(path);
    }
  }
  index << '\n';
  for (std::size_t l = 0; l < grid.layers(); ++l) {
    index << "dominant.layer" << l + 1 << " = " << grid.dominant_class(l) << '\n';
  }
  return written;
}

}  // namespace cwc::cli
