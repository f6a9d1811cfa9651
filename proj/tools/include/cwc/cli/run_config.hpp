#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include "cwc/datasets.hpp"
#include "cwc/network.hpp"
#include "cwc/schedule.hpp"

namespace cwc::cli {

struct DataSection {
  DatasetKind kind = DatasetKind::Mnist;
  std::filesystem::path path = "data/mnist";
  /// Use only the first N samples of a split; 0 keeps all.
  std::size_t train_limit = 0;
  std::size_t test_limit = 0;

  friend bool operator==(const DataSection&, const DataSection&) = default;
};

struct RunSection {
  std::uint64_t seed = 0;
  /// Unset ("auto") trains until the last layer's plateau.
  std::optional<std::size_t> epochs;
  std::filesystem::path out = "runs/default";
  /// Write a checkpoint every N epochs; 0 writes only the final one.
  std::size_t checkpoint_every = 0;

  friend bool operator==(const RunSection&, const RunSection&) = default;
};

/// Schedule discovery; the epoch cap is `[ilt] max_epoch`.
struct DiscoverySection {
  PlateauDetector detector;

  friend bool operator==(const DiscoverySection&, const DiscoverySection&) = default;
};

/// Everything a command needs, read from a sectioned `key = value` file:
/// [data] [conv] [pooling] [loss] [optimizer] [ilt] [predictor] [run].
struct RunConfig {
  DataSection data;
  NetworkConfig network;
  DiscoverySection discovery;
  RunSection run;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Parses config text. Missing keys keep their defaults (the CFSE CwC
/// MNIST setup); unknown sections or keys, malformed values and
/// inconsistent list lengths throw ConfigError naming `origin`.
RunConfig parse_run_config(std::string_view text, std::string_view origin = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);

/// Canonical text form; parse_run_config(serialize_run_config(c)) == c.
std::string serialize_run_config(const RunConfig& config);

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Environment variable for `section.key`, e.g. CWC_OPTIMIZER_LEARNING_RATE.
std::string env_name(std::string_view section, std::string_view key);

/// Applies every set CWC_<SECTION>_<KEY> variable on top of `text` and
/// parses the result.
RunConfig parse_with_env(std::string_view text, std::string_view origin, const EnvLookup& env);

/// Process-environment lookup.
std::optional<std::string> process_env(const std::string& name);

/// "CFSE_CwC", "FF-CNN_PvN", ... followed by the head suffix.
std::string model_label(const NetworkConfig& network, PredictorKind predictor);

InputShape input_shape_for(DatasetKind kind);

}  // namespace cwc::cli
