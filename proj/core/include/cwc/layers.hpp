#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cwc/tensor.hpp"

namespace cwc {

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input);

template <typename T>
void relu_inplace(BasicTensor<T>& values);

/// grad * [input > 0]; the subgradient at exactly zero is zero.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_output);

/// Per-channel batch normalization state.
///
/// gamma/beta are real parameters (they count towards model size) but the
/// local losses are taken before normalization, so nothing ever updates them.
struct BatchNormState {
  std::vector<float> running_mean;
  std::vector<float> running_var;
  std::vector<float> gamma;
  std::vector<float> beta;
  float momentum = 0.1f;
  float epsilon = 1e-5f;

  /// Running stats 0/1, gamma 1, beta 0.
  static BatchNormState fresh(std::size_t channels);

  [[nodiscard]] std::size_t channels() const { return running_mean.size(); }
  [[nodiscard]] std::size_t parameter_count() const { return gamma.size() + beta.size(); }
};

/// Training mode normalizes with the batch's biased per-channel variance over
/// (n, h, w) and folds the batch statistics into the running estimates
/// (unbiased variance, as exponential moving averages). Inference mode uses
/// the running estimates only.
FeatureTensor batchnorm_forward(const FeatureTensor& input, BatchNormState& state, bool training);

/// Inference-mode normalization with the running estimates.
FeatureTensor batchnorm_inference(const FeatureTensor& input, const BatchNormState& state);

struct PoolResult {
  FeatureTensor output;
  /// Flat input offset of the selected element, one per output element.
  std::vector<std::uint32_t> argmax;
};

/// 2x2 window, stride 2. A trailing odd row/column is dropped.
PoolResult maxpool2x2(const FeatureTensor& input);

}  // namespace cwc
