#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "cwc/datasets.hpp"
#include "cwc/network.hpp"
#include "cwc/trainer.hpp"

namespace cwc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// A restorable training snapshot.
struct Checkpoint {
  Network network;
  PredictorHeads heads;
  /// Input normalization the network was trained with.
  ChannelStats stats;
  /// Last completed epoch.
  std::size_t epoch = 0;
};

/// Versioned binary container, little-endian throughout: the network
/// configuration, then per layer a shape header followed by kernels, bias,
/// BatchNorm statistics and Adam moments as 32-bit floats, then the
/// normalization statistics and the predictor heads.
void save_checkpoint(const std::filesystem::path& path, const Network& network,
                     const PredictorHeads& heads, const ChannelStats& stats, std::size_t epoch);

/// Throws DataError on a missing, truncated or foreign file and on an
/// unsupported version.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Human-readable listing of layer specs and training epochs.
std::string checkpoint_manifest(const Network& network, std::size_t epoch);
void write_manifest(const std::filesystem::path& path, const Network& network, std::size_t epoch);

}  // namespace cwc
