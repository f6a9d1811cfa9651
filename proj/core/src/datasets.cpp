#include "cwc/datasets.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>

#include "cwc/errors.hpp"

namespace cwc {

namespace fs = std::filesystem;

std::string_view to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::Mnist:
      return "mnist";
    case DatasetKind::FashionMnist:
      return "fashion_mnist";
    case DatasetKind::Cifar10:
      return "cifar10";
  }
  return "unknown";
}

DatasetKind parse_dataset_kind(std::string_view name) {
  if (name == "mnist") {
    return DatasetKind::Mnist;
  }
  if (name == "fashion_mnist" || name == "fashion-mnist") {
    return DatasetKind::FashionMnist;
  }
  if (name == "cifar10" || name == "cifar-10") {
    return DatasetKind::Cifar10;
  }
  throw ConfigError("unknown dataset '" + std::string(name) +
                    "' (expected mnist, fashion_mnist or cifar10)");
}

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
constexpr std::size_t kCifarRecord = 1 + 3 * 32 * 32;

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open " + path.string());
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t at) {
  return (std::uint32_t{bytes[at]} << 24) | (std::uint32_t{bytes[at + 1]} << 16) |
         (std::uint32_t{bytes[at + 2]} << 8) | std::uint32_t{bytes[at + 3]};
}

void write_be32(std::ofstream& out, std::uint32_t value) {
  const std::array<char, 4> bytes = {static_cast<char>(value >> 24), static_cast<char>(value >> 16),
                                     static_cast<char>(value >> 8), static_cast<char>(value)};
  out.write(bytes.data(), bytes.size());
}

std::string hex(std::uint32_t value) {
  char buffer[16];
  std::snprintf(buffer, sizeof buffer, "0x%08x", value);
  return buffer;
}

void require_size(const fs::path& path, std::size_t actual, std::size_t expected) {
  if (actual != expected) {
    throw DataError(path.string() + ": expected " + std::to_string(expected) +
                    " bytes from the header, file has " + std::to_string(actual));
  }
}

FeatureTensor scale_pixels(const std::vector<std::uint8_t>& raw, Shape4 shape) {
  std::vector<float> values(raw.size());
  std::transform(raw.begin(), raw.end(), values.begin(),
                 [](std::uint8_t b) { return static_cast<float>(b) / 255.0f; });
  return FeatureTensor(shape, std::move(values));
}

}  // namespace

Dataset load_idx(const fs::path& images_path, const fs::path& labels_path) {
  const auto images = read_file(images_path);
  const auto labels = read_file(labels_path);
  if (images.size() < 16) {
    throw DataError(images_path.string() + ": truncated IDX header (" +
                    std::to_string(images.size()) + " bytes)");
  }
  if (labels.size() < 8) {
    throw DataError(labels_path.string() + ": truncated IDX header (" +
                    std::to_string(labels.size()) + " bytes)");
  }
  if (const auto magic = read_be32(images, 0); magic != kIdxImagesMagic) {
    throw DataError(images_path.string() + ": bad IDX image magic " + hex(magic) +
                    ", expected " + hex(kIdxImagesMagic));
  }
  if (const auto magic = read_be32(labels, 0); magic != kIdxLabelsMagic) {
    throw DataError(labels_path.string() + ": bad IDX label magic " + hex(magic) +
                    ", expected " + hex(kIdxLabelsMagic));
  }
  const std::size_t count = read_be32(images, 4);
  const std::size_t rows = read_be32(images, 8);
  const std::size_t cols = read_be32(images, 12);
  const std::size_t label_count = read_be32(labels, 4);
  if (count != label_count) {
    throw DataError(images_path.string() + " holds " + std::to_string(count) + " images but " +
                    labels_path.string() + " holds " + std::to_string(label_count) + " labels");
  }
  if (count == 0 || rows == 0 || cols == 0) {
    throw DataError(images_path.string() + ": empty IDX image set");
  }
  require_size(images_path, images.size(), 16 + count * rows * cols);
  require_size(labels_path, labels.size(), 8 + count);

  Dataset ds;
  ds.name = images_path.parent_path().filename().string();
  ds.raw.assign(images.begin() + 16, images.end());
  ds.images = scale_pixels(ds.raw, Shape4{count, 1, rows, cols});
  ds.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint8_t label = labels[8 + i];
    if (label >= ds.classes) {
      throw DataError(labels_path.string() + ": label " + std::to_string(label) + " at index " +
                      std::to_string(i) + " outside 0..9");
    }
    ds.labels[i] = label;
  }
  return ds;
}

Dataset load_cifar10(std::span<const fs::path> batches) {
  if (batches.empty()) {
    throw DataError("no CIFAR-10 batch files given");
  }
  Dataset ds;
  ds.name = "cifar10";
  for (const fs::path& path : batches) {
    const auto bytes = read_file(path);
    if (bytes.empty() || bytes.size() % kCifarRecord != 0) {
      throw DataError(path.string() + ": size " + std::to_string(bytes.size()) +
                      " is not a positive multiple of the 3073-byte record");
    }
    for (std::size_t at = 0; at < bytes.size(); at += kCifarRecord) {
      const std::uint8_t label = bytes[at];
      if (label >= ds.classes) {
        throw DataError(path.string() + ": label " + std::to_string(label) + " at record " +
                        std::to_string(at / kCifarRecord) + " outside 0..9");
      }
      ds.labels.push_back(label);
      ds.raw.insert(ds.raw.end(), bytes.begin() + static_cast<std::ptrdiff_t>(at + 1),
                    bytes.begin() + static_cast<std::ptrdiff_t>(at + kCifarRecord));
    }
  }
  ds.images = scale_pixels(ds.raw, Shape4{ds.labels.size(), 3, 32, 32});
  return ds;
}

void write_idx(const Dataset& dataset, const fs::path& images, const fs::path& labels) {
  if (dataset.images.c() != 1) {
    throw DataError("IDX export supports single-channel images only");
  }
  std::ofstream img(images, std::ios::binary);
  std::ofstream lab(labels, std::ios::binary);
  if (!img || !lab) {
    throw DataError("cannot write IDX files " + images.string() + ", " + labels.string());
  }
  write_be32(img, kIdxImagesMagic);
  write_be32(img, static_cast<std::uint32_t>(dataset.size()));
  write_be32(img, static_cast<std::uint32_t>(dataset.images.h()));
  write_be32(img, static_cast<std::uint32_t>(dataset.images.w()));
  img.write(reinterpret_cast<const char*>(dataset.raw.data()),
            static_cast<std::streamsize>(dataset.raw.size()));
  write_be32(lab, kIdxLabelsMagic);
  write_be32(lab, static_cast<std::uint32_t>(dataset.size()));
  for (ClassIndex label : dataset.labels) {
    lab.put(static_cast<char>(label));
  }
}

ChannelStats channel_stats(const Dataset& dataset) {
  const FeatureTensor& images = dataset.images;
  ChannelStats stats;
  const double count = static_cast<double>(images.n() * images.h() * images.w());
  for (std::size_t c = 0; c < images.c(); ++c) {
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::size_t n = 0; n < images.n(); ++n) {
      for (float v : images.plane(n, c)) {
        sum += v;
        sum_sq += static_cast<double>(v) * v;
      }
    }
    const double mean = sum / count;
    const double var = std::max(sum_sq / count - mean * mean, 0.0);
    stats.mean.push_back(static_cast<float>(mean));
    stats.stddev.push_back(static_cast<float>(std::sqrt(var)));
  }
  return stats;
}

void standardize(Dataset& dataset, const ChannelStats& stats) {
  FeatureTensor& images = dataset.images;
  if (stats.mean.size() != images.c() || stats.stddev.size() != images.c()) {
    throw ConfigError("standardization constants for " + std::to_string(stats.mean.size()) +
                      " channels applied to " + images.shape().to_string());
  }
  for (std::size_t c = 0; c < images.c(); ++c) {
    if (!(stats.stddev[c] > 0.0f)) {
      throw DataError("channel " + std::to_string(c) + " has zero standard deviation");
    }
    const float mean = stats.mean[c];
    const float inv = 1.0f / stats.stddev[c];
    for (std::size_t n = 0; n < images.n(); ++n) {
      for (float& v : images.plane(n, c)) {
        v = (v - mean) * inv;
      }
    }
  }
}

DatasetPair load_dataset(DatasetKind kind, const fs::path& directory,
                         const ChannelStats* stats) {
  if (!fs::is_directory(directory)) {
    throw DataError("dataset directory " + directory.string() + " does not exist");
  }
  DatasetPair pair;
  if (kind == DatasetKind::Cifar10) {
    std::vector<fs::path> train;
    for (int i = 1; i <= 5; ++i) {
      train.push_back(directory / ("data_batch_" + std::to_string(i) + ".bin"));
    }
    const fs::path test[] = {directory / "test_batch.bin"};
    pair.train = load_cifar10(train);
    pair.test = load_cifar10(test);
  } else {
    pair.train = load_idx(directory / "train-images-idx3-ubyte",
                          directory / "train-labels-idx1-ubyte");
    pair.test = load_idx(directory / "t10k-images-idx3-ubyte", directory / "t10k-labels-idx1-ubyte");
  }
  pair.train.name = pair.test.name = std::string(to_string(kind));
  pair.train.split = Split::Train;
  pair.test.split = Split::Test;
  pair.stats = stats != nullptr ? *stats : channel_stats(pair.train);
  standardize(pair.train, pair.stats);
  standardize(pair.test, pair.stats);
  return pair;
}

Dataset take_first(const Dataset& dataset, std::size_t count) {
  if (count == 0 || count >= dataset.size()) {
    return dataset;
  }
  Dataset out;
  out.name = dataset.name;
  out.split = dataset.split;
  out.classes = dataset.classes;
  out.images = dataset.images.slice_batch(0, count);
  out.labels.assign(dataset.labels.begin(), dataset.labels.begin() + static_cast<std::ptrdiff_t>(count));
  const std::size_t stride = dataset.images.shape().sample_size();
  out.raw.assign(dataset.raw.begin(),
                 dataset.raw.begin() + static_cast<std::ptrdiff_t>(count * stride));
  return out;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  // Fisher-Yates with an explicit draw so the permutation does not depend on
  // the standard library's shuffle.
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

BatchIterator::BatchIterator(const Dataset& dataset, std::size_t batch_size, std::uint64_t seed)
    : dataset_(&dataset), batch_size_(batch_size), order_(shuffled_indices(dataset.size(), seed)) {
  if (batch_size_ == 0) {
    throw ConfigError("batch size must be >= 1");
  }
}

BatchIterator::BatchIterator(const Dataset& dataset, std::size_t batch_size)
    : dataset_(&dataset), batch_size_(batch_size), order_(dataset.size()) {
  if (batch_size_ == 0) {
    throw ConfigError("batch size must be >= 1");
  }
  std::iota(order_.begin(), order_.end(), std::size_t{0});
}

std::size_t BatchIterator::batch_count() const {
  return (order_.size() + batch_size_ - 1) / batch_size_;
}

std::optional<Batch> BatchIterator::next() {
  if (cursor_ >= order_.size()) {
    return std::nullopt;
  }
  const std::size_t count = std::min(batch_size_, order_.size() - cursor_);
  Batch batch;
  batch.indices.assign(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                       order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + count));
  batch.images = dataset_->images.gather(batch.indices);
  batch.labels.reserve(count);
  for (std::size_t i : batch.indices) {
    batch.labels.push_back(dataset_->labels[i]);
  }
  cursor_ += count;
  return batch;
}

}  // namespace cwc
