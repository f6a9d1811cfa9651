#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "cwc/adam.hpp"
#include "cwc/goodness.hpp"
#include "cwc/network.hpp"
#include "cwc/tensor.hpp"

namespace cwc {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ColVector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

/// N x (C*H*W) view of an NCHW tensor.
inline Eigen::Map<const RowMatrix<float>> flatten_rows(const FeatureTensor& tensor) {
  return {tensor.data().data(), static_cast<Eigen::Index>(tensor.n()),
          static_cast<Eigen::Index>(tensor.shape().sample_size())};
}

struct Prediction {
  ClassIndex label = 0;
  std::vector<float> scores;
};

// ---------------------------------------------------------------------------
// Softmax predictor: one linear layer on the flattened final-block output,
// trained with cross-entropy on the raw logits.

template <typename T>
struct SoftmaxGradients {
  T loss{};
  RowMatrix<T> grad_weights;
  ColVector<T> grad_bias;
};

/// Mean cross-entropy of softmax(features * weights^T + bias) and its
/// gradients. weights: J x F, features: N x F.
template <typename T>
SoftmaxGradients<T> softmax_cross_entropy(const RowMatrix<T>& weights, const ColVector<T>& bias,
                                          const Eigen::Ref<const RowMatrix<T>>& features,
                                          std::span<const ClassIndex> targets);

class SoftmaxHead {
 public:
  SoftmaxHead() = default;
  /// Zero-initialized weights and bias.
  SoftmaxHead(std::size_t features, std::size_t classes, AdamConfig optimizer);

  /// One Adam step on the batch; returns the batch loss before the step.
  float train_step(const FeatureTensor& features, std::span<const ClassIndex> targets);
  [[nodiscard]] std::vector<Prediction> predict(const FeatureTensor& features) const;

  [[nodiscard]] std::size_t features() const { return static_cast<std::size_t>(weights_.cols()); }
  [[nodiscard]] std::size_t classes() const { return static_cast<std::size_t>(weights_.rows()); }
  RowMatrix<float>& weights() { return weights_; }
  ColVector<float>& bias() { return bias_; }
  AdamState& adam() { return adam_; }
  [[nodiscard]] const RowMatrix<float>& weights() const { return weights_; }
  [[nodiscard]] const ColVector<float>& bias() const { return bias_; }
  [[nodiscard]] const AdamState& adam() const { return adam_; }

 private:
  RowMatrix<float> weights_;
  ColVector<float> bias_;
  AdamState adam_;
};

// ---------------------------------------------------------------------------
// Goodness predictor: two dense ReLU layers trained with forward-forward
// style local losses. The flattened features are scaled to unit length and
// the label is one-hot encoded into J extra input slots appended after them.

template <typename T>
struct DenseParams {
  /// out x in
  RowMatrix<T> weights;
  ColVector<T> bias;
};

/// A set of rows sharing one input matrix. With `labels` non-empty, row n
/// carries the one-hot overlay for labels[n] in the last J input slots.
struct OverlayView {
  std::vector<ClassIndex> labels;
  /// 1 for a positive row, 0 for a negative row.
  std::vector<std::uint8_t> positive;
};

template <typename T>
struct DenseGoodnessResult {
  T loss{};
  RowMatrix<T> grad_weights;
  ColVector<T> grad_bias;
  /// Per view: goodness (mean squared ReLU activation) of each row.
  std::vector<ColVector<T>> goodness;
  /// Per view: ReLU activations, rows x out.
  std::vector<RowMatrix<T>> hidden;
};

/// Local loss of one dense layer, averaged over all rows of all views:
/// softplus(theta - g) for positive rows, softplus(g - theta) for negative
/// rows. `x` holds the feature part of the input; with overlays
/// weights.cols() == x.cols() + classes, otherwise weights.cols() == x.cols().
template <typename T>
DenseGoodnessResult<T> dense_goodness_loss(const DenseParams<T>& params,
                                           const Eigen::Ref<const RowMatrix<T>>& x,
                                           std::span<const OverlayView> views,
                                           std::size_t classes, T theta);

/// Scales each row to unit Euclidean length (zero rows stay zero).
template <typename T>
RowMatrix<T> normalize_rows(const RowMatrix<T>& rows);

class GoodnessHead {
 public:
  GoodnessHead() = default;
  /// He-uniform weights, zero biases, deterministic in `seed`.
  GoodnessHead(std::size_t features, std::size_t classes, GoodnessHeadConfig config,
               AdamConfig optimizer, std::uint64_t seed);

  /// Positives carry the target label, negatives a wrong label drawn
  /// uniformly from the other J-1 classes. Each layer takes one Adam step on
  /// its own loss. Returns the sum of the two layers' losses.
  float train_step(const FeatureTensor& features, std::span<const ClassIndex> targets);
  float train_step(const FeatureTensor& features, std::span<const ClassIndex> targets,
                   std::span<const ClassIndex> negatives);

  /// Scores every label by the goodness summed over both layers (J passes
  /// per sample).
  [[nodiscard]] std::vector<Prediction> predict(const FeatureTensor& features) const;

  [[nodiscard]] std::size_t features() const { return features_; }
  [[nodiscard]] std::size_t classes() const { return classes_; }
  [[nodiscard]] float theta() const { return config_.theta; }
  [[nodiscard]] std::uint64_t passes_evaluated() const { return passes_; }

  std::array<DenseParams<float>, 2>& layers() { return layers_; }
  std::array<AdamState, 2>& adam() { return adam_; }
  [[nodiscard]] const std::array<DenseParams<float>, 2>& layers() const { return layers_; }
  [[nodiscard]] const std::array<AdamState, 2>& adam() const { return adam_; }

 private:
  std::size_t features_ = 0;
  std::size_t classes_ = 0;
  GoodnessHeadConfig config_;
  std::array<DenseParams<float>, 2> layers_;
  std::array<AdamState, 2> adam_;
  std::mt19937_64 rng_;
  mutable std::uint64_t passes_ = 0;
};

// ---------------------------------------------------------------------------
// Global-averaging predictor: argmax of the final layer's goodness row.

std::vector<Prediction> ga_predict(const FeatureTensor& final_activation, std::size_t classes);

}  // namespace cwc
