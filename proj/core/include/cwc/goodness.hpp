#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "cwc/tensor.hpp"

namespace cwc {

/// Zero-based class index.
using ClassIndex = std::uint32_t;

/// Per-sample, per-class goodness: the mean square of the activations in the
/// class's channel block. Entries are non-negative.
template <typename T>
class BasicGoodnessMatrix {
 public:
  BasicGoodnessMatrix() = default;
  BasicGoodnessMatrix(std::size_t rows, std::size_t classes)
      : rows_(rows), classes_(classes), values_(rows * classes, T{0}) {}

  [[nodiscard]] std::size_t rows() const { return rows_; }
  [[nodiscard]] std::size_t classes() const { return classes_; }
  T& operator()(std::size_t n, std::size_t j) { return values_[n * classes_ + j]; }
  const T& operator()(std::size_t n, std::size_t j) const { return values_[n * classes_ + j]; }
  [[nodiscard]] std::span<const T> row(std::size_t n) const {
    return std::span<const T>(values_).subspan(n * classes_, classes_);
  }
  [[nodiscard]] std::span<const T> values() const { return values_; }

 private:
  std::size_t rows_ = 0;
  std::size_t classes_ = 0;
  std::vector<T> values_;
};

using GoodnessMatrix = BasicGoodnessMatrix<float>;

/// One-hot N x J mask built from target indices; every row has exactly one 1.
class LabelMask {
 public:
  LabelMask(std::span<const ClassIndex> targets, std::size_t classes);

  [[nodiscard]] std::size_t rows() const { return targets_.size(); }
  [[nodiscard]] std::size_t classes() const { return classes_; }
  [[nodiscard]] std::span<const ClassIndex> targets() const { return targets_; }
  [[nodiscard]] std::uint8_t operator()(std::size_t n, std::size_t j) const {
    return targets_[n] == j ? 1 : 0;
  }

 private:
  std::vector<ClassIndex> targets_;
  std::size_t classes_;
};

/// Channel block j covers channels [j*S, (j+1)*S) with S = C / classes.
/// Throws ConfigError when C is not a multiple of `classes`.
template <typename T>
BasicGoodnessMatrix<T> compute_goodness(const BasicTensor<T>& activations, std::size_t classes);

/// g+[n] = G[n, target_n].
template <typename T>
std::vector<T> positive_goodness(const BasicGoodnessMatrix<T>& goodness, const LabelMask& mask);

/// g-[n] = sum of G[n, j] over j != target_n, summed in ascending j.
template <typename T>
std::vector<T> negative_goodness(const BasicGoodnessMatrix<T>& goodness, const LabelMask& mask);

/// Lowest index among the maxima.
template <typename T>
ClassIndex argmax_lowest(std::span<const T> scores);

enum class LossKind { CwC, PvN };

std::string_view to_string(LossKind kind);

template <typename T>
struct BasicLossOutput {
  T loss{};
  /// dL/d(activations), same shape as the activations.
  BasicTensor<T> grad_activations;
  BasicGoodnessMatrix<T> goodness;
};

using LossOutput = BasicLossOutput<float>;

/// Sigmoid threshold loss: pushes g+ above theta and the mean non-target
/// goodness g-/(J-1) below it, averaged over the 2N terms.
template <typename T>
BasicLossOutput<T> loss_pvn(const BasicTensor<T>& activations,
                            std::span<const ClassIndex> targets, T theta, std::size_t classes);

/// Softmax cross-entropy with the goodness row as logits.
template <typename T>
BasicLossOutput<T> loss_cwc(const BasicTensor<T>& activations,
                            std::span<const ClassIndex> targets, std::size_t classes);

/// Dispatches on `kind`; theta is ignored for CwC.
template <typename T>
BasicLossOutput<T> local_loss(LossKind kind, const BasicTensor<T>& activations,
                              std::span<const ClassIndex> targets, T theta, std::size_t classes);

/// log(1 + exp(x)) without overflow.
double softplus(double x);

}  // namespace cwc
