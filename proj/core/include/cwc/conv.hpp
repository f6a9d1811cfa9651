#pragma once

#include <cstddef>
#include <vector>

#include "cwc/tensor.hpp"

namespace cwc {

/// Kernels of shape (c_out, c_in_per_group, k, k) plus one bias per output
/// channel. With `groups == G` output channel block g reads only input channel
/// block g, i.e. the full weight matrix is block diagonal. `groups == 1` is an
/// ordinary dense convolution.
template <typename T>
struct ConvWeights {
  BasicTensor<T> kernels;
  std::vector<T> bias;
  std::size_t groups = 1;

  [[nodiscard]] std::size_t c_out() const { return kernels.n(); }
  [[nodiscard]] std::size_t c_in_per_group() const { return kernels.c(); }
  [[nodiscard]] std::size_t c_in() const { return kernels.c() * groups; }
  [[nodiscard]] std::size_t kernel_size() const { return kernels.h(); }
  [[nodiscard]] std::size_t parameter_count() const { return kernels.size() + bias.size(); }

  /// Throws ConfigError on square-kernel, bias-length or divisibility violations.
  void validate() const;
};

struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t padding = 1;
};

template <typename T>
struct ConvGradients {
  BasicTensor<T> kernels;
  std::vector<T> bias;
};

/// Output extent along one spatial axis; throws when the padded input is
/// smaller than the kernel.
std::size_t conv_output_extent(std::size_t input, std::size_t kernel, ConvGeometry geometry);

Shape4 conv_output_shape(const Shape4& input, std::size_t c_out, std::size_t kernel,
                         ConvGeometry geometry);

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const ConvWeights<T>& weights,
                              ConvGeometry geometry);

/// Weight and bias gradients of a scalar loss given dL/d(output). No input
/// gradient is produced: layers are trained in isolation.
template <typename T>
ConvGradients<T> conv2d_backward(const BasicTensor<T>& input, const ConvWeights<T>& weights,
                                 const BasicTensor<T>& grad_output, ConvGeometry geometry);

extern template struct ConvWeights<float>;
extern template struct ConvWeights<double>;

}  // namespace cwc
