#include "cwc/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "cwc/errors.hpp"

namespace cwc {

std::string_view to_string(PredictorKind kind) {
  switch (kind) {
    case PredictorKind::Softmax:
      return "softmax";
    case PredictorKind::Goodness:
      return "goodness";
    case PredictorKind::GlobalAveraging:
      return "ga";
  }
  return "unknown";
}

namespace {

NetworkConfig two_block_config(InputShape input, std::size_t classes, LossKind loss,
                               bool grouped_blocks) {
  NetworkConfig config;
  config.input = input;
  config.classes = classes;
  const std::size_t channels[] = {20, 80, 240, 480};
  for (std::size_t i = 0; i < 4; ++i) {
    LayerSpec spec;
    spec.out_channels = channels[i];
    spec.grouped = grouped_blocks && (i % 2 == 1);
    spec.maxpool_after = (i % 2 == 1);
    spec.loss = loss;
    config.layers.push_back(spec);
  }
  config.schedule = IltSchedule::from_plateaus({10, 15, 19, 25});
  return config;
}

std::string layer_name(std::size_t index) { return "layer " + std::to_string(index + 1); }

}  // namespace

NetworkConfig NetworkConfig::cfse(InputShape input, std::size_t classes, LossKind loss) {
  return two_block_config(input, classes, loss, true);
}

NetworkConfig NetworkConfig::ff_cnn(InputShape input, std::size_t classes, LossKind loss) {
  return two_block_config(input, classes, loss, false);
}

bool NetworkConfig::uses(PredictorKind kind) const {
  return std::find(predictors.begin(), predictors.end(), kind) != predictors.end();
}

std::vector<Shape4> NetworkConfig::stage_shapes() const {
  std::vector<Shape4> shapes;
  Shape4 current{1, input.channels, input.height, input.width};
  shapes.push_back(current);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& spec = layers[i];
    try {
      current = conv_output_shape(current, spec.out_channels, spec.kernel, spec.geometry());
    } catch (const ConfigError& e) {
      throw ConfigError(layer_name(i) + ": " + e.what());
    }
    if (spec.maxpool_after) {
      if (current.h < 2 || current.w < 2) {
        throw ConfigError(layer_name(i) + ": output " + current.to_string() +
                          " too small for 2x2 max-pooling");
      }
      current.h /= 2;
      current.w /= 2;
    }
    shapes.push_back(current);
  }
  return shapes;
}

std::size_t NetworkConfig::flattened_features() const {
  return stage_shapes().back().sample_size();
}

void NetworkConfig::validate() const {
  if (classes < 2) {
    throw ConfigError("need at least two classes, got " + std::to_string(classes));
  }
  if (layers.empty()) {
    throw ConfigError("network has no layers");
  }
  if (input.channels == 0 || input.height == 0 || input.width == 0) {
    throw ConfigError("input shape must be non-empty");
  }
  if (batch_size == 0) {
    throw ConfigError("batch size must be >= 1");
  }
  std::size_t in_channels = input.channels;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& spec = layers[i];
    if (spec.out_channels == 0 || spec.out_channels % classes != 0) {
      throw ConfigError(layer_name(i) + ": " + std::to_string(spec.out_channels) +
                        " output channels not divisible by " + std::to_string(classes) +
                        " classes");
    }
    if (spec.grouped && in_channels % classes != 0) {
      throw ConfigError(layer_name(i) + ": grouped convolution needs input channels (" +
                        std::to_string(in_channels) + ") divisible by " +
                        std::to_string(classes) + " classes");
    }
    if (spec.kernel == 0 || spec.stride == 0) {
      throw ConfigError(layer_name(i) + ": kernel and stride must be >= 1");
    }
    if (spec.loss == LossKind::PvN && !(spec.theta > 0.0f)) {
      throw ConfigError(layer_name(i) + ": PvN threshold must be positive");
    }
    in_channels = spec.out_channels;
  }
  (void)stage_shapes();
  schedule.validate(layers.size());
  if (predictors.empty()) {
    throw ConfigError("at least one predictor must be selected");
  }
}

Network::Network(NetworkConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  std::size_t in_channels = config_.input.channels;
  for (std::size_t i = 0; i < config_.layers.size(); ++i) {
    const LayerSpec& spec = config_.layers[i];
    const std::size_t groups = config_.groups(i);
    const std::size_t cin_g = in_channels / groups;

    TrainedLayer layer;
    layer.spec = spec;
    layer.weights.groups = groups;
    layer.weights.kernels = FeatureTensor(Shape4{spec.out_channels, cin_g, spec.kernel, spec.kernel});
    layer.weights.bias.assign(spec.out_channels, 0.0f);

    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(i)};
    std::mt19937_64 rng(seq);
    const float bound = std::sqrt(6.0f / static_cast<float>(cin_g * spec.kernel * spec.kernel));
    std::uniform_real_distribution<float> dist(-bound, bound);
    for (float& w : layer.weights.kernels.data()) {
      w = dist(rng);
    }

    layer.bn = BatchNormState::fresh(spec.out_channels);
    const std::size_t sizes[] = {layer.weights.kernels.size(), layer.weights.bias.size()};
    layer.adam = AdamState(sizes, config_.optimizer);
    layers_.push_back(std::move(layer));
    in_channels = spec.out_channels;
  }
}

Network build_network(const NetworkConfig& config, std::uint64_t seed) {
  return Network(config, seed);
}

namespace {

FeatureTensor finish_layer(const TrainedLayer& layer, FeatureTensor normalized) {
  if (!layer.spec.maxpool_after) {
    return normalized;
  }
  return maxpool2x2(normalized).output;
}

}  // namespace

LayerPass Network::apply_layer(std::size_t index, const FeatureTensor& input, bool bn_training) {
  TrainedLayer& layer = layers_.at(index);
  FeatureTensor activation = conv2d_forward(input, layer.weights, layer.spec.geometry());
  relu_inplace(activation);
  FeatureTensor output = finish_layer(layer, batchnorm_forward(activation, layer.bn, bn_training));
  return {std::move(activation), std::move(output)};
}

LayerPass Network::apply_layer(std::size_t index, const FeatureTensor& input) const {
  const TrainedLayer& layer = layers_.at(index);
  FeatureTensor activation = conv2d_forward(input, layer.weights, layer.spec.geometry());
  relu_inplace(activation);
  FeatureTensor output = finish_layer(layer, batchnorm_inference(activation, layer.bn));
  return {std::move(activation), std::move(output)};
}

FeatureTensor Network::forward_to_layer(const FeatureTensor& batch, std::size_t layer_index,
                                        bool training) {
  if (layer_index >= layers_.size()) {
    throw ConfigError("layer index " + std::to_string(layer_index) + " out of range for " +
                      std::to_string(layers_.size()) + " layers");
  }
  FeatureTensor x = batch;
  for (std::size_t i = 0; i < layer_index; ++i) {
    x = apply_layer(i, x, training && !layers_[i].frozen).output;
  }
  return x;
}

InferenceResult Network::infer(const FeatureTensor& batch, bool keep_activations) const {
  InferenceResult result;
  const FeatureTensor* input = &batch;
  LayerPass pass;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    pass = apply_layer(i, *input);
    result.features = std::move(pass.output);
    input = &result.features;
    if (keep_activations) {
      result.activations.push_back(pass.activation);
    }
  }
  result.last_activation = std::move(pass.activation);
  return result;
}

BatchResult Network::train_batch(const FeatureTensor& batch, std::span<const ClassIndex> targets,
                                 const BatchPlan& plan) {
  const std::size_t count = layers_.size();
  if (plan.update.size() != count || plan.bn_training.size() != count) {
    throw ConfigError("batch plan covers " + std::to_string(plan.update.size()) + " layers, network has " +
                      std::to_string(count));
  }
  if (targets.size() != batch.n()) {
    throw ConfigError("batch of " + std::to_string(batch.n()) + " samples with " +
                      std::to_string(targets.size()) + " targets");
  }

  BatchResult result;
  result.layers.resize(count);
  FeatureTensor input = batch;
  for (std::size_t i = 0; i < count; ++i) {
    TrainedLayer& layer = layers_[i];
    if (plan.update[i] && layer.frozen) {
      throw ConfigError(layer_name(i) + " is frozen and rejects updates");
    }
    const ConvGeometry geometry = layer.spec.geometry();
    FeatureTensor activation = conv2d_forward(input, layer.weights, geometry);
    relu_inplace(activation);

    LayerBatchStats& stats = result.layers[i];
    try {
      LossOutput loss = local_loss(layer.spec.loss, activation, targets, layer.spec.theta,
                                   config_.classes);
      stats.loss = loss.loss;
      if (!std::isfinite(stats.loss)) {
        throw NumericalError("non-finite loss");
      }
      for (std::size_t n = 0; n < batch.n(); ++n) {
        if (argmax_lowest(loss.goodness.row(n)) == targets[n]) {
          ++stats.correct;
        }
      }
      if (plan.update[i]) {
        const FeatureTensor grad_pre = relu_backward(activation, loss.grad_activations);
        ConvGradients<float> grads = conv2d_backward(input, layer.weights, grad_pre, geometry);
        const ParameterSlot slots[] = {
            {layer.weights.kernels.data(), grads.kernels.data()},
            {layer.weights.bias, grads.bias},
        };
        adam_step(slots, layer.adam, layer_name(i));
        stats.updated = true;
      }
    } catch (const NumericalError& e) {
      const std::string what = e.what();
      throw NumericalError(what.starts_with("layer ") ? what : layer_name(i) + ": " + what);
    }

    input = finish_layer(layer, batchnorm_forward(activation, layer.bn, plan.bn_training[i]));
    if (i + 1 == count) {
      result.last_activation = std::move(activation);
    }
  }
  result.features = std::move(input);
  return result;
}

std::uint64_t fnv1a(std::span<const std::byte> bytes, std::uint64_t seed) {
  std::uint64_t hash = seed;
  for (std::byte b : bytes) {
    hash ^= static_cast<std::uint64_t>(b);
    hash *= 1099511628211ull;
  }
  return hash;
}

std::uint64_t Network::fingerprint(std::size_t index) const {
  const TrainedLayer& layer = layers_.at(index);
  std::uint64_t hash = fnv1a(std::as_bytes(layer.weights.kernels.data()));
  hash = fnv1a(std::as_bytes(std::span(layer.weights.bias)), hash);
  hash = fnv1a(std::as_bytes(std::span(layer.bn.running_mean)), hash);
  hash = fnv1a(std::as_bytes(std::span(layer.bn.running_var)), hash);
  return hash;
}

}  // namespace cwc
