#include "cwc/layers.hpp"

#include <cmath>

#include "cwc/errors.hpp"
#include "reduce.hpp"

namespace cwc {

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
  BasicTensor<T> out = input;
  relu_inplace(out);
  return out;
}

template <typename T>
void relu_inplace(BasicTensor<T>& values) {
  for (T& v : values.data()) {
    v = v > T{0} ? v : T{0};
  }
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_output) {
  require_same_shape(input.shape(), grad_output.shape(), "relu_backward");
  BasicTensor<T> grad(input.shape());
  auto x = input.data();
  auto g = grad_output.data();
  auto out = grad.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = x[i] > T{0} ? g[i] : T{0};
  }
  return grad;
}

template BasicTensor<float> relu(const BasicTensor<float>&);
template BasicTensor<double> relu(const BasicTensor<double>&);
template void relu_inplace(BasicTensor<float>&);
template void relu_inplace(BasicTensor<double>&);
template BasicTensor<float> relu_backward(const BasicTensor<float>&, const BasicTensor<float>&);
template BasicTensor<double> relu_backward(const BasicTensor<double>&,
                                           const BasicTensor<double>&);

BatchNormState BatchNormState::fresh(std::size_t channels) {
  BatchNormState state;
  state.running_mean.assign(channels, 0.0f);
  state.running_var.assign(channels, 1.0f);
  state.gamma.assign(channels, 1.0f);
  state.beta.assign(channels, 0.0f);
  return state;
}

namespace {

void check_channels(const FeatureTensor& input, const BatchNormState& state) {
  if (input.c() != state.channels()) {
    throw ConfigError("batchnorm over " + std::to_string(state.channels()) +
                      " channels given input " + input.shape().to_string());
  }
}

}  // namespace

FeatureTensor batchnorm_inference(const FeatureTensor& input, const BatchNormState& state) {
  check_channels(input, state);
  FeatureTensor out(input.shape());
  for (std::size_t c = 0; c < input.c(); ++c) {
    const double scale = state.gamma[c] / std::sqrt(double{state.running_var[c]} + state.epsilon);
    const double shift = state.beta[c] - state.running_mean[c] * scale;
    for (std::size_t n = 0; n < input.n(); ++n) {
      auto src = input.plane(n, c);
      auto dst = out.plane(n, c);
      for (std::size_t i = 0; i < src.size(); ++i) {
        dst[i] = static_cast<float>(src[i] * scale + shift);
      }
    }
  }
  return out;
}

FeatureTensor batchnorm_forward(const FeatureTensor& input, BatchNormState& state, bool training) {
  if (!training) {
    return batchnorm_inference(input, state);
  }
  check_channels(input, state);
  FeatureTensor out(input.shape());
  const std::size_t count = input.n() * input.h() * input.w();

  for (std::size_t c = 0; c < input.c(); ++c) {
    double mean = 0.0;
    for (std::size_t n = 0; n < input.n(); ++n) {
      mean += detail::sum(input.plane(n, c));
    }
    mean /= static_cast<double>(count);
    double var = 0.0;
    for (std::size_t n = 0; n < input.n(); ++n) {
      var += detail::sum_squares(input.plane(n, c), mean);
    }
    const double unbiased = count > 1 ? var / static_cast<double>(count - 1) : 0.0;
    var /= static_cast<double>(count);
    const double m = state.momentum;
    state.running_mean[c] = static_cast<float>((1.0 - m) * state.running_mean[c] + m * mean);
    state.running_var[c] = static_cast<float>((1.0 - m) * state.running_var[c] + m * unbiased);

    const double scale = state.gamma[c] / std::sqrt(var + state.epsilon);
    const double beta = state.beta[c];
    for (std::size_t n = 0; n < input.n(); ++n) {
      auto src = input.plane(n, c);
      auto dst = out.plane(n, c);
      for (std::size_t i = 0; i < src.size(); ++i) {
        dst[i] = static_cast<float>((src[i] - mean) * scale + beta);
      }
    }
  }
  return out;
}

PoolResult maxpool2x2(const FeatureTensor& input) {
  if (input.h() < 2 || input.w() < 2) {
    throw ConfigError("2x2 max-pooling needs h, w >= 2, got " + input.shape().to_string());
  }
  const std::size_t out_h = input.h() / 2;
  const std::size_t out_w = input.w() / 2;
  PoolResult result{FeatureTensor(Shape4{input.n(), input.c(), out_h, out_w}), {}};
  result.argmax.resize(result.output.size());

  const float* values = input.data().data();
  float* out = result.output.data().data();
  std::uint32_t* arg = result.argmax.data();
  const std::size_t in_w = input.w();
  for (std::size_t n = 0; n < input.n(); ++n) {
    for (std::size_t c = 0; c < input.c(); ++c) {
      const std::size_t base = input.offset(n, c, 0, 0);
      for (std::size_t y = 0; y < out_h; ++y) {
        const std::size_t top = base + 2 * y * in_w;
        for (std::size_t x = 0; x < out_w; ++x) {
          const std::size_t candidates[4] = {top + 2 * x, top + 2 * x + 1, top + in_w + 2 * x,
                                             top + in_w + 2 * x + 1};
          std::size_t best = candidates[0];
          for (std::size_t at : candidates) {
            if (values[at] > values[best]) {
              best = at;
            }
          }
          *out++ = values[best];
          *arg++ = static_cast<std::uint32_t>(best);
        }
      }
    }
  }
  return result;
}

}  // namespace cwc
