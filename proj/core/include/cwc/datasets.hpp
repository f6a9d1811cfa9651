#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cwc/goodness.hpp"
#include "cwc/tensor.hpp"

namespace cwc {

enum class Split { Train, Test };

enum class DatasetKind { Mnist, FashionMnist, Cifar10 };

std::string_view to_string(DatasetKind kind);
/// Accepts "mnist", "fashion_mnist" / "fashion-mnist", "cifar10" / "cifar-10".
DatasetKind parse_dataset_kind(std::string_view name);

struct Dataset {
  std::string name;
  Split split = Split::Train;
  /// (n, c, h, w); [0, 1]-scaled after loading, standardized by `standardize`.
  FeatureTensor images;
  std::vector<ClassIndex> labels;
  /// Original pixel bytes in the same NCHW order as `images`.
  std::vector<std::uint8_t> raw;
  std::size_t classes = 10;

  [[nodiscard]] std::size_t size() const { return labels.size(); }
};

struct ChannelStats {
  std::vector<float> mean;
  std::vector<float> stddev;
};

/// MNIST-family IDX pair (big-endian magics 0x00000803 / 0x00000801).
/// Throws DataError on bad magic, truncation or count mismatch.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// CIFAR-10 binary batches: 3073-byte records, label byte then R, G, B planes.
Dataset load_cifar10(std::span<const std::filesystem::path> batches);

/// Writes `raw` and `labels` back to an IDX pair (single-channel data only).
void write_idx(const Dataset& dataset, const std::filesystem::path& images,
               const std::filesystem::path& labels);

/// Per-channel mean and population standard deviation of `images`.
ChannelStats channel_stats(const Dataset& dataset);

/// images <- (images - mean) / stddev per channel.
void standardize(Dataset& dataset, const ChannelStats& stats);

struct DatasetPair {
  Dataset train;
  Dataset test;
  /// Computed on the training split and applied to both.
  ChannelStats stats;
};

/// Loads the standard file names from `directory` and standardizes both
/// splits with the training statistics, or with `stats` when given.
DatasetPair load_dataset(DatasetKind kind, const std::filesystem::path& directory,
                         const ChannelStats* stats = nullptr);

/// First `count` samples (all when count is 0 or exceeds the size).
Dataset take_first(const Dataset& dataset, std::size_t count);

struct Batch {
  FeatureTensor images;
  std::vector<ClassIndex> labels;
  /// Dataset indices of the rows.
  std::vector<std::size_t> indices;
};

/// Seeded permutation of [0, n).
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed);

/// Visits a seeded permutation of the dataset once, in batches of
/// `batch_size`; the last batch may be smaller.
class BatchIterator {
 public:
  BatchIterator(const Dataset& dataset, std::size_t batch_size, std::uint64_t seed);
  /// Sequential order, no shuffling.
  BatchIterator(const Dataset& dataset, std::size_t batch_size);

  std::optional<Batch> next();
  [[nodiscard]] std::size_t batch_count() const;

 private:
  const Dataset* dataset_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace cwc
