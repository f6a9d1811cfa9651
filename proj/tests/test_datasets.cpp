#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "cwc/datasets.hpp"
#include "cwc/errors.hpp"
#include "cwc/network.hpp"
#include "synthetic.hpp"
#include "temp_dir.hpp"

namespace cwc {
namespace {

using testing::read_bytes;
using testing::TempDir;
using testing::write_bytes;

using Bytes = std::vector<unsigned char>;

void put_u32(Bytes& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) {
    out.push_back(static_cast<unsigned char>(v >> shift));
  }
}

Bytes idx_images(std::uint32_t magic, std::uint32_t count, std::uint32_t rows, std::uint32_t cols,
                 const Bytes& pixels) {
  Bytes out;
  put_u32(out, magic);
  put_u32(out, count);
  put_u32(out, rows);
  put_u32(out, cols);
  out.insert(out.end(), pixels.begin(), pixels.end());
  return out;
}

Bytes idx_labels(std::uint32_t magic, const Bytes& labels) {
  Bytes out;
  put_u32(out, magic);
  put_u32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

Bytes ramp(std::size_t count, unsigned start = 0) {
  Bytes out(count);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = static_cast<unsigned char>((start + i * 7) % 256);
  }
  return out;
}

// 3 images of 2x3 pixels.
struct IdxFixture {
  TempDir dir;
  std::filesystem::path images = dir / "img";
  std::filesystem::path labels = dir / "lbl";
  Bytes pixels = ramp(18);

  IdxFixture() {
    write_bytes(images, idx_images(0x803, 3, 2, 3, pixels));
    write_bytes(labels, idx_labels(0x801, {4, 0, 9}));
  }
};

TEST(LoadIdx, ReadsShapeScaledPixelsAndLabels) {
  IdxFixture f;
  const Dataset d = load_idx(f.images, f.labels);
  EXPECT_EQ(d.images.shape(), (Shape4{3, 1, 2, 3}));
  EXPECT_EQ(d.labels, (std::vector<ClassIndex>{4, 0, 9}));
  for (std::size_t i = 0; i < 18; ++i) {
    EXPECT_EQ(d.raw[i], f.pixels[i]);
    EXPECT_FLOAT_EQ(d.images.data()[i], static_cast<float>(f.pixels[i]) / 255.0f);
  }
}

TEST(LoadIdx, BadMagicReportsTheObservedValue) {
  IdxFixture f;
  try {
    load_idx(f.images, f.images);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("0x00000803"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_idx(f.labels, f.labels), DataError);
}

TEST(LoadIdx, TruncatedFilesAreLengthErrors) {
  IdxFixture f;
  Bytes cut = read_bytes(f.images);
  cut.resize(cut.size() - 5);
  write_bytes(f.images, cut);
  try {
    load_idx(f.images, f.labels);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("expected"), std::string::npos) << e.what();
  }
  write_bytes(f.images, {0, 0, 8});
  EXPECT_THROW(load_idx(f.images, f.labels), DataError);
}

TEST(LoadIdx, CountMismatchAndBadLabelsAreErrors) {
  IdxFixture f;
  write_bytes(f.labels, idx_labels(0x801, {1, 2}));
  EXPECT_THROW(load_idx(f.images, f.labels), DataError);
  write_bytes(f.labels, idx_labels(0x801, {1, 2, 10}));
  EXPECT_THROW(load_idx(f.images, f.labels), DataError);
  EXPECT_THROW(load_idx(f.dir / "missing", f.labels), DataError);
}

TEST(LoadIdx, RoundTripThroughWriteIsBitwiseIdentical) {
  IdxFixture f;
  const Dataset d = load_idx(f.images, f.labels);
  write_idx(d, f.dir / "img2", f.dir / "lbl2");
  EXPECT_EQ(read_bytes(f.dir / "img2"), read_bytes(f.images));
  EXPECT_EQ(read_bytes(f.dir / "lbl2"), read_bytes(f.labels));
  const Dataset again = load_idx(f.dir / "img2", f.dir / "lbl2");
  EXPECT_EQ(again.raw, d.raw);
  EXPECT_EQ(again.labels, d.labels);
}

TEST(LoadCifar, RecordLayoutAndLabelOffset) {
  TempDir dir;
  Bytes file;
  for (unsigned char label : {7, 0}) {
    file.push_back(label);
    const Bytes pixels = ramp(3072, label);
    file.insert(file.end(), pixels.begin(), pixels.end());
  }
  write_bytes(dir / "b.bin", file);
  const std::filesystem::path paths[] = {dir / "b.bin", dir / "b.bin"};
  const Dataset d = load_cifar10(paths);
  EXPECT_EQ(d.images.shape(), (Shape4{4, 3, 32, 32}));
  EXPECT_EQ(d.labels, (std::vector<ClassIndex>{7, 0, 7, 0}));
  // Record 0: red plane first, row-major.
  EXPECT_FLOAT_EQ(d.images(0, 0, 0, 1), static_cast<float>(file[2]) / 255.0f);
  EXPECT_FLOAT_EQ(d.images(0, 1, 0, 0), static_cast<float>(file[1 + 1024]) / 255.0f);
  EXPECT_FLOAT_EQ(d.images(0, 2, 31, 31), static_cast<float>(file[3072]) / 255.0f);

  file.pop_back();
  write_bytes(dir / "bad.bin", file);
  const std::filesystem::path bad[] = {dir / "bad.bin"};
  EXPECT_THROW(load_cifar10(bad), DataError);
  EXPECT_THROW(load_cifar10({}), DataError);
}

TEST(LoadDataset, StandardizesBothSplitsWithTrainStatistics) {
  TempDir dir;
  const Dataset train = testing::striped_dataset(40, 10, 28, 1);
  const Dataset test = testing::striped_dataset(20, 10, 28, 2, Split::Test);
  write_idx(train, dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
  write_idx(test, dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte");

  const DatasetPair pair = load_dataset(DatasetKind::Mnist, dir.path());
  EXPECT_EQ(pair.train.name, "mnist");
  EXPECT_EQ(pair.test.split, Split::Test);
  const auto& x = pair.train.images.data();
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
  double var = 0.0;
  for (float v : x) {
    var += (v - mean) * (v - mean);
  }
  EXPECT_NEAR(mean, 0.0, 1e-3);
  EXPECT_NEAR(std::sqrt(var / x.size()), 1.0, 1e-3);

  const float m = pair.stats.mean[0];
  const float s = pair.stats.stddev[0];
  for (std::size_t i = 0; i < 50; ++i) {
    EXPECT_NEAR(pair.test.images.data()[i], (test.raw[i] / 255.0f - m) / s, 1e-5);
  }

  const ChannelStats fixed{{0.5f}, {0.25f}};
  const DatasetPair reused = load_dataset(DatasetKind::Mnist, dir.path(), &fixed);
  EXPECT_NEAR(reused.train.images.data()[3], (train.raw[3] / 255.0f - 0.5f) / 0.25f, 1e-6);
  EXPECT_THROW(load_dataset(DatasetKind::Mnist, dir / "nope"), DataError);
}

TEST(LoadDataset, MnistSubsetWhenPresent) {
  const std::filesystem::path dir = CWC_TEST_DATA_DIR;
  if (!std::filesystem::exists(dir / "train-images-idx3-ubyte")) {
    GTEST_SKIP() << "no data at " << dir;
  }
  const DatasetPair pair = load_dataset(DatasetKind::Mnist, dir);
  EXPECT_EQ(pair.train.images.shape(), (Shape4{8000, 1, 28, 28}));
  EXPECT_EQ(pair.test.images.shape(), (Shape4{2000, 1, 28, 28}));
  std::vector<std::size_t> counts(10, 0);
  for (ClassIndex l : pair.train.labels) {
    ++counts.at(l);
  }
  for (std::size_t c : counts) {
    EXPECT_GT(c, 600u);
  }
}

TEST(Standardize, RejectsMismatchedOrDegenerateStatistics) {
  Dataset d = testing::striped_dataset(4, 2, 4, 3);
  EXPECT_THROW(standardize(d, {{0.0f, 0.0f}, {1.0f, 1.0f}}), ConfigError);
  EXPECT_THROW(standardize(d, {{0.0f}, {0.0f}}), DataError);
}

TEST(DatasetKindNames, ParseAndPrint) {
  EXPECT_EQ(parse_dataset_kind("mnist"), DatasetKind::Mnist);
  EXPECT_EQ(parse_dataset_kind("fashion-mnist"), DatasetKind::FashionMnist);
  EXPECT_EQ(parse_dataset_kind("fashion_mnist"), DatasetKind::FashionMnist);
  EXPECT_EQ(parse_dataset_kind("cifar-10"), DatasetKind::Cifar10);
  EXPECT_EQ(to_string(DatasetKind::Cifar10), "cifar10");
  EXPECT_THROW(parse_dataset_kind("svhn"), ConfigError);
}

TEST(Batches, SizesCoverTheSplit) {
  const Dataset d = testing::striped_dataset(10, 2, 4, 4);
  BatchIterator it(d, 3, 5);
  std::vector<std::size_t> sizes;
  std::vector<ClassIndex> labels;
  while (auto b = it.next()) {
    sizes.push_back(b->labels.size());
    EXPECT_EQ(b->images.n(), b->labels.size());
    labels.insert(labels.end(), b->labels.begin(), b->labels.end());
  }
  EXPECT_EQ(sizes, (std::vector<std::size_t>{3, 3, 3, 1}));
  std::vector<ClassIndex> expected = d.labels;
  std::sort(expected.begin(), expected.end());
  std::sort(labels.begin(), labels.end());
  EXPECT_EQ(labels, expected);
  EXPECT_THROW(BatchIterator(d, 0, 1), ConfigError);
}

TEST(Batches, SameSeedSameSequenceAndImagesStayPaired) {
  const Dataset d = testing::striped_dataset(37, 5, 6, 6);
  BatchIterator a(d, 8, 11);
  BatchIterator b(d, 8, 11);
  BatchIterator other(d, 8, 12);
  std::vector<std::size_t> first;
  std::vector<std::size_t> second;
  while (auto batch = a.next()) {
    const auto twin = b.next();
    ASSERT_TRUE(twin);
    EXPECT_EQ(batch->indices, twin->indices);
    for (std::size_t i = 0; i < batch->indices.size(); ++i) {
      const std::size_t at = batch->indices[i];
      EXPECT_EQ(batch->labels[i], d.labels[at]);
      const auto got = batch->images.slice_batch(i, 1).data();
      const auto want = d.images.slice_batch(at, 1).data();
      EXPECT_TRUE(std::equal(got.begin(), got.end(), want.begin()));
    }
    first.insert(first.end(), batch->indices.begin(), batch->indices.end());
  }
  EXPECT_FALSE(b.next());
  while (auto batch = other.next()) {
    second.insert(second.end(), batch->indices.begin(), batch->indices.end());
  }
  EXPECT_NE(first, second);
}

TEST(Batches, SequentialIteratorKeepsFileOrder) {
  const Dataset d = testing::striped_dataset(5, 5, 4, 7);
  BatchIterator it(d, 2);
  std::vector<std::size_t> order;
  while (auto b = it.next()) {
    order.insert(order.end(), b->indices.begin(), b->indices.end());
  }
  EXPECT_EQ(order, (std::vector<std::size_t>{0, 1, 2, 3, 4}));
}

TEST(TakeFirst, TruncatesOrKeepsEverything) {
  const Dataset d = testing::striped_dataset(9, 3, 4, 8);
  const Dataset head = take_first(d, 4);
  EXPECT_EQ(head.size(), 4u);
  EXPECT_EQ(head.images.n(), 4u);
  EXPECT_EQ(head.raw.size(), 4u * 16);
  EXPECT_EQ(take_first(d, 0).size(), 9u);
  EXPECT_EQ(take_first(d, 100).size(), 9u);
}

}  // namespace
}  // namespace cwc
