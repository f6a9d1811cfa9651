#include "cwc/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "cwc/errors.hpp"

namespace cwc {

std::string Shape4::to_string() const {
  std::ostringstream os;
  os << '(' << n << ", " << c << ", " << h << ", " << w << ')';
  return os.str();
}

namespace {

void validate_dims(const Shape4& shape) {
  if (shape.n == 0 || shape.c == 0 || shape.h == 0 || shape.w == 0) {
    throw ConfigError("tensor dimensions must all be >= 1, got " + shape.to_string());
  }
}

}  // namespace

template <typename T>
BasicTensor<T>::BasicTensor(Shape4 shape, T fill) : shape_(shape) {
  validate_dims(shape_);
  data_.assign(shape_.size(), fill);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape4 shape, std::vector<T> values)
    : shape_(shape), data_(std::move(values)) {
  validate_dims(shape_);
  if (data_.size() != shape_.size()) {
    throw ConfigError("tensor of shape " + shape_.to_string() + " needs " +
                      std::to_string(shape_.size()) + " values, got " +
                      std::to_string(data_.size()));
  }
}

template <typename T>
BasicTensor<T> BasicTensor<T>::slice_batch(std::size_t first, std::size_t count) const {
  if (count == 0 || first + count > shape_.n) {
    throw ConfigError("batch slice [" + std::to_string(first) + ", " +
                      std::to_string(first + count) + ") out of range for " +
                      shape_.to_string());
  }
  const std::size_t stride = shape_.sample_size();
  std::vector<T> out(data_.begin() + static_cast<std::ptrdiff_t>(first * stride),
                     data_.begin() + static_cast<std::ptrdiff_t>((first + count) * stride));
  return BasicTensor(Shape4{count, shape_.c, shape_.h, shape_.w}, std::move(out));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::gather(std::span<const std::size_t> indices) const {
  if (indices.empty()) {
    throw ConfigError("cannot gather an empty batch");
  }
  BasicTensor out(Shape4{indices.size(), shape_.c, shape_.h, shape_.w});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= shape_.n) {
      throw ConfigError("gather index " + std::to_string(indices[i]) +
                        " out of range for " + shape_.to_string());
    }
    auto src = sample(indices[i]);
    std::copy(src.begin(), src.end(), out.sample(i).begin());
  }
  return out;
}

void require_same_shape(const Shape4& a, const Shape4& b, const char* what) {
  if (!(a == b)) {
    throw ConfigError(std::string(what) + ": shape mismatch " + a.to_string() + " vs " +
                      b.to_string());
  }
}

template class BasicTensor<float>;
template class BasicTensor<double>;

}  // namespace cwc
