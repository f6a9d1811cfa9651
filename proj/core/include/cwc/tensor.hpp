#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace cwc {

/// NCHW extents. Every dimension is at least 1.
struct Shape4 {
  std::size_t n = 1;
  std::size_t c = 1;
  std::size_t h = 1;
  std::size_t w = 1;

  [[nodiscard]] std::size_t size() const { return n * c * h * w; }
  [[nodiscard]] std::size_t plane() const { return h * w; }
  [[nodiscard]] std::size_t sample_size() const { return c * h * w; }
  [[nodiscard]] std::string to_string() const;

  friend bool operator==(const Shape4&, const Shape4&) = default;
};

/// Dense rank-4 tensor in NCHW order.
///
/// Storage is owned and contiguous; `data().size() == shape().size()` always
/// holds. The float instantiation carries activations and weights during
/// training, the double instantiation is used by gradient checks.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() : data_(1, T{0}) {}
  explicit BasicTensor(Shape4 shape, T fill = T{0});
  BasicTensor(Shape4 shape, std::vector<T> values);

  [[nodiscard]] const Shape4& shape() const { return shape_; }
  [[nodiscard]] std::size_t n() const { return shape_.n; }
  [[nodiscard]] std::size_t c() const { return shape_.c; }
  [[nodiscard]] std::size_t h() const { return shape_.h; }
  [[nodiscard]] std::size_t w() const { return shape_.w; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }

  [[nodiscard]] std::span<T> data() { return data_; }
  [[nodiscard]] std::span<const T> data() const { return data_; }

  [[nodiscard]] std::size_t offset(std::size_t n, std::size_t c, std::size_t h,
                                   std::size_t w) const {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  T& operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[offset(n, c, h, w)];
  }
  const T& operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[offset(n, c, h, w)];
  }

  /// One sample's C*H*W block.
  [[nodiscard]] std::span<T> sample(std::size_t n) {
    return std::span<T>(data_).subspan(n * shape_.sample_size(), shape_.sample_size());
  }
  [[nodiscard]] std::span<const T> sample(std::size_t n) const {
    return std::span<const T>(data_).subspan(n * shape_.sample_size(), shape_.sample_size());
  }

  /// One H*W plane.
  [[nodiscard]] std::span<T> plane(std::size_t n, std::size_t c) {
    return std::span<T>(data_).subspan(offset(n, c, 0, 0), shape_.plane());
  }
  [[nodiscard]] std::span<const T> plane(std::size_t n, std::size_t c) const {
    return std::span<const T>(data_).subspan(offset(n, c, 0, 0), shape_.plane());
  }

  /// Copies samples [first, first + count) into a new tensor.
  [[nodiscard]] BasicTensor slice_batch(std::size_t first, std::size_t count) const;
  /// Gathers the listed samples, in order, into a new tensor.
  [[nodiscard]] BasicTensor gather(std::span<const std::size_t> indices) const;

  /// Element-wise conversion (float <-> double).
  template <typename U>
  [[nodiscard]] BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

 private:
  Shape4 shape_;
  std::vector<T> data_;
};

using FeatureTensor = BasicTensor<float>;

/// Throws ConfigError naming both shapes when `a != b`.
void require_same_shape(const Shape4& a, const Shape4& b, const char* what);

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;

}  // namespace cwc
