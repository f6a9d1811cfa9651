#include "cwc/conv.hpp"

#include <algorithm>

#include <Eigen/Core>

#include "cwc/errors.hpp"

namespace cwc {

template <typename T>
void ConvWeights<T>::validate() const {
  if (kernels.h() != kernels.w()) {
    throw ConfigError("convolution kernels must be square, got " + kernels.shape().to_string());
  }
  if (groups == 0 || c_out() % groups != 0) {
    throw ConfigError("output channels " + std::to_string(c_out()) +
                      " not divisible by groups " + std::to_string(groups));
  }
  if (bias.size() != c_out()) {
    throw ConfigError("bias length " + std::to_string(bias.size()) + " != output channels " +
                      std::to_string(c_out()));
  }
}

std::size_t conv_output_extent(std::size_t input, std::size_t kernel, ConvGeometry geometry) {
  if (geometry.stride == 0) {
    throw ConfigError("convolution stride must be >= 1");
  }
  const std::size_t padded = input + 2 * geometry.padding;
  if (padded < kernel) {
    throw ConfigError("spatial extent " + std::to_string(input) + " with padding " +
                      std::to_string(geometry.padding) + " is smaller than kernel " +
                      std::to_string(kernel));
  }
  return (padded - kernel) / geometry.stride + 1;
}

Shape4 conv_output_shape(const Shape4& input, std::size_t c_out, std::size_t kernel,
                         ConvGeometry geometry) {
  return Shape4{input.n, c_out, conv_output_extent(input.h, kernel, geometry),
                conv_output_extent(input.w, kernel, geometry)};
}

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_input(const Shape4& input, std::size_t c_in, std::size_t groups) {
  if (input.c != c_in) {
    throw ConfigError("convolution expects " + std::to_string(c_in) + " input channels (" +
                      std::to_string(groups) + " groups), input shape is " + input.to_string());
  }
}

// Samples per im2col chunk; keeps the lowered matrix near cache size.
std::size_t chunk_samples(std::size_t patch, std::size_t positions, std::size_t bytes_per_value) {
  constexpr std::size_t kBudget = std::size_t{4} << 20;
  return std::max<std::size_t>(1, kBudget / std::max<std::size_t>(1, patch * positions * bytes_per_value));
}

// Lowers input channels [first_channel, first_channel + channels) of samples
// [first_sample, first_sample + n) into a (channels*k*k) x (n*out_h*out_w)
// row-major matrix.
template <typename T>
void im2col(const BasicTensor<T>& input, std::size_t first_sample, std::size_t n,
            std::size_t first_channel, std::size_t channels, std::size_t k,
            ConvGeometry geometry, std::size_t out_h, std::size_t out_w, RowMatrix<T>& col) {
  const std::size_t in_h = input.h();
  const std::size_t in_w = input.w();
  const std::size_t positions = out_h * out_w;
  const auto pad = static_cast<std::ptrdiff_t>(geometry.padding);
  const auto stride = static_cast<std::ptrdiff_t>(geometry.stride);
  col.resize(static_cast<Eigen::Index>(channels * k * k),
             static_cast<Eigen::Index>(n * positions));

  for (std::size_t ci = 0; ci < channels; ++ci) {
    for (std::size_t u = 0; u < k; ++u) {
      for (std::size_t v = 0; v < k; ++v) {
        const auto row = static_cast<Eigen::Index>((ci * k + u) * k + v);
        T* dst = col.row(row).data();
        for (std::size_t s = 0; s < n; ++s) {
          const T* plane = input.plane(first_sample + s, first_channel + ci).data();
          for (std::size_t oy = 0; oy < out_h; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * stride - pad +
                                      static_cast<std::ptrdiff_t>(u);
            T* out_row = dst + s * positions + oy * out_w;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in_h)) {
              std::fill(out_row, out_row + out_w, T{0});
              continue;
            }
            const T* in_row = plane + static_cast<std::size_t>(iy) * in_w;
            for (std::size_t ox = 0; ox < out_w; ++ox) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * stride - pad +
                                        static_cast<std::ptrdiff_t>(v);
              out_row[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in_w))
                                ? T{0}
                                : in_row[static_cast<std::size_t>(ix)];
            }
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const ConvWeights<T>& weights,
                              ConvGeometry geometry) {
  weights.validate();
  check_input(input.shape(), weights.c_in(), weights.groups);

  const std::size_t k = weights.kernel_size();
  const Shape4 out_shape = conv_output_shape(input.shape(), weights.c_out(), k, geometry);
  const std::size_t positions = out_shape.plane();
  const std::size_t cin_g = weights.c_in_per_group();
  const std::size_t cout_g = weights.c_out() / weights.groups;
  const std::size_t patch = cin_g * k * k;

  BasicTensor<T> output(out_shape);
  thread_local RowMatrix<T> col;
  thread_local RowMatrix<T> result;
  const std::size_t chunk = chunk_samples(patch, positions, sizeof(T));
  for (std::size_t first = 0; first < out_shape.n; first += chunk) {
    const std::size_t count = std::min(chunk, out_shape.n - first);
    for (std::size_t g = 0; g < weights.groups; ++g) {
      im2col(input, first, count, g * cin_g, cin_g, k, geometry, out_shape.h, out_shape.w, col);
      Eigen::Map<const RowMatrix<T>> kernel_block(
          weights.kernels.data().data() + g * cout_g * patch, static_cast<Eigen::Index>(cout_g),
          static_cast<Eigen::Index>(patch));
      result.noalias() = kernel_block * col;

      for (std::size_t o = 0; o < cout_g; ++o) {
        const std::size_t channel = g * cout_g + o;
        const T bias = weights.bias[channel];
        const T* src = result.row(static_cast<Eigen::Index>(o)).data();
        for (std::size_t s = 0; s < count; ++s) {
          T* dst = output.plane(first + s, channel).data();
          const T* block = src + s * positions;
          for (std::size_t p = 0; p < positions; ++p) {
            dst[p] = block[p] + bias;
          }
        }
      }
    }
  }
  return output;
}

template <typename T>
ConvGradients<T> conv2d_backward(const BasicTensor<T>& input, const ConvWeights<T>& weights,
                                 const BasicTensor<T>& grad_output, ConvGeometry geometry) {
  weights.validate();
  check_input(input.shape(), weights.c_in(), weights.groups);

  const std::size_t k = weights.kernel_size();
  const Shape4 out_shape = conv_output_shape(input.shape(), weights.c_out(), k, geometry);
  require_same_shape(grad_output.shape(), out_shape, "conv2d_backward grad_output");

  const std::size_t positions = out_shape.plane();
  const std::size_t cin_g = weights.c_in_per_group();
  const std::size_t cout_g = weights.c_out() / weights.groups;
  const std::size_t patch = cin_g * k * k;
  ConvGradients<T> grads{BasicTensor<T>(weights.kernels.shape(), T{0}),
                         std::vector<T>(weights.c_out(), T{0})};
  thread_local RowMatrix<T> col;
  thread_local RowMatrix<T> grad_block;
  const std::size_t chunk = chunk_samples(patch, positions, sizeof(T));
  for (std::size_t first = 0; first < out_shape.n; first += chunk) {
    const std::size_t count = std::min(chunk, out_shape.n - first);
    grad_block.resize(static_cast<Eigen::Index>(cout_g),
                      static_cast<Eigen::Index>(count * positions));
    for (std::size_t g = 0; g < weights.groups; ++g) {
      for (std::size_t o = 0; o < cout_g; ++o) {
        T* dst = grad_block.row(static_cast<Eigen::Index>(o)).data();
        for (std::size_t s = 0; s < count; ++s) {
          auto plane = grad_output.plane(first + s, g * cout_g + o);
          std::copy(plane.begin(), plane.end(), dst + s * positions);
        }
      }
      im2col(input, first, count, g * cin_g, cin_g, k, geometry, out_shape.h, out_shape.w, col);

      Eigen::Map<RowMatrix<T>> kernel_grad(grads.kernels.data().data() + g * cout_g * patch,
                                           static_cast<Eigen::Index>(cout_g),
                                           static_cast<Eigen::Index>(patch));
      kernel_grad.noalias() += grad_block * col.transpose();
      for (std::size_t o = 0; o < cout_g; ++o) {
        grads.bias[g * cout_g + o] += grad_block.row(static_cast<Eigen::Index>(o)).sum();
      }
    }
  }
  return grads;
}

template struct ConvWeights<float>;
template struct ConvWeights<double>;

template BasicTensor<float> conv2d_forward(const BasicTensor<float>&, const ConvWeights<float>&,
                                           ConvGeometry);
template BasicTensor<double> conv2d_forward(const BasicTensor<double>&,
                                            const ConvWeights<double>&, ConvGeometry);
template ConvGradients<float> conv2d_backward(const BasicTensor<float>&,
                                              const ConvWeights<float>&,
                                              const BasicTensor<float>&, ConvGeometry);
template ConvGradients<double> conv2d_backward(const BasicTensor<double>&,
                                               const ConvWeights<double>&,
                                               const BasicTensor<double>&, ConvGeometry);

}  // namespace cwc
