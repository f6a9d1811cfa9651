#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "cwc/adam.hpp"
#include "cwc/conv.hpp"
#include "cwc/goodness.hpp"
#include "cwc/layers.hpp"
#include "cwc/schedule.hpp"
#include "cwc/tensor.hpp"

namespace cwc {

enum class PredictorKind { Softmax, Goodness, GlobalAveraging };

std::string_view to_string(PredictorKind kind);

/// One locally trained convolutional layer: Conv -> ReLU -> BatchNorm
/// (-> 2x2 max-pool). The local loss reads the ReLU output.
struct LayerSpec {
  std::size_t out_channels = 0;
  /// Channel-wise grouped convolution with one group per class.
  bool grouped = false;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;
  bool maxpool_after = false;
  LossKind loss = LossKind::CwC;
  /// PvN threshold.
  float theta = 2.0f;

  [[nodiscard]] ConvGeometry geometry() const { return {stride, padding}; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct InputShape {
  std::size_t channels = 1;
  std::size_t height = 28;
  std::size_t width = 28;

  friend bool operator==(const InputShape&, const InputShape&) = default;
};

struct GoodnessHeadConfig {
  std::size_t hidden = 1024;
  float theta = 2.0f;

  friend bool operator==(const GoodnessHeadConfig&, const GoodnessHeadConfig&) = default;
};

struct NetworkConfig {
  InputShape input;
  std::size_t classes = 10;
  std::vector<LayerSpec> layers;
  std::vector<PredictorKind> predictors{PredictorKind::Softmax};
  IltSchedule schedule;
  AdamConfig optimizer;
  std::size_t batch_size = 128;
  GoodnessHeadConfig goodness_head;

  /// Two CFSE blocks: channels [20, 80, 240, 480], grouped [no, yes, no, yes],
  /// max-pool after the grouped layers, plateaus [10, 15, 19, 25].
  static NetworkConfig cfse(InputShape input, std::size_t classes = 10,
                            LossKind loss = LossKind::CwC);
  /// Same layout without grouped convolutions.
  static NetworkConfig ff_cnn(InputShape input, std::size_t classes = 10,
                              LossKind loss = LossKind::CwC);

  [[nodiscard]] std::size_t groups(std::size_t layer) const {
    return layers[layer].grouped ? classes : 1;
  }
  [[nodiscard]] bool uses(PredictorKind kind) const;

  /// Single-sample shapes entering each layer; the final entry is the output
  /// of the last layer after normalization and pooling.
  [[nodiscard]] std::vector<Shape4> stage_shapes() const;
  [[nodiscard]] std::size_t flattened_features() const;

  /// Throws ConfigError naming the offending layer.
  void validate() const;

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

struct TrainedLayer {
  LayerSpec spec;
  ConvWeights<float> weights;
  BatchNormState bn;
  AdamState adam;
  std::size_t epochs_trained = 0;
  bool frozen = false;
};

/// What a layer produces for one batch.
struct LayerPass {
  /// ReLU output; the goodness tap.
  FeatureTensor activation;
  /// After BatchNorm and optional pooling; the next layer's input.
  FeatureTensor output;
};

/// Which layers update and which normalize with batch statistics during one
/// training pass.
struct BatchPlan {
  std::vector<bool> update;
  std::vector<bool> bn_training;
};

struct LayerBatchStats {
  double loss = 0.0;
  /// Samples whose goodness argmax equals the target.
  std::size_t correct = 0;
  bool updated = false;
};

struct BatchResult {
  std::vector<LayerBatchStats> layers;
  FeatureTensor features;
  FeatureTensor last_activation;
};

struct InferenceResult {
  FeatureTensor features;
  FeatureTensor last_activation;
  /// Every layer's ReLU output, when requested.
  std::vector<FeatureTensor> activations;
};

class Network {
 public:
  /// He-uniform kernels (fan-in), zero biases; deterministic in `seed`.
  Network(NetworkConfig config, std::uint64_t seed);

  [[nodiscard]] const NetworkConfig& config() const { return config_; }
  [[nodiscard]] std::size_t layer_count() const { return layers_.size(); }
  [[nodiscard]] TrainedLayer& layer(std::size_t i) { return layers_.at(i); }
  [[nodiscard]] const TrainedLayer& layer(std::size_t i) const { return layers_.at(i); }

  /// Runs layer `index` on its input. BatchNorm uses (and updates) batch
  /// statistics when `bn_training`, running statistics otherwise.
  LayerPass apply_layer(std::size_t index, const FeatureTensor& input, bool bn_training);
  [[nodiscard]] LayerPass apply_layer(std::size_t index, const FeatureTensor& input) const;

  /// The tensor layer `layer_index` sees for `batch`. Index 0 returns the
  /// batch itself. In training mode non-frozen predecessors normalize with
  /// batch statistics; frozen ones always use running statistics.
  FeatureTensor forward_to_layer(const FeatureTensor& batch, std::size_t layer_index,
                                 bool training);

  /// Inference-mode pass through every layer.
  [[nodiscard]] InferenceResult infer(const FeatureTensor& batch,
                                      bool keep_activations = false) const;

  /// One local-learning pass: each layer runs on the previous layer's
  /// output, layers flagged in `plan.update` take one Adam step on their own
  /// loss, in index order. No gradient crosses a layer boundary.
  BatchResult train_batch(const FeatureTensor& batch, std::span<const ClassIndex> targets,
                          const BatchPlan& plan);

  /// Hash of kernels, biases and BatchNorm state of one layer.
  [[nodiscard]] std::uint64_t fingerprint(std::size_t layer) const;

 private:
  NetworkConfig config_;
  std::vector<TrainedLayer> layers_;
};

/// Convenience spelling of the constructor.
Network build_network(const NetworkConfig& config, std::uint64_t seed);

/// FNV-1a over raw bytes.
std::uint64_t fnv1a(std::span<const std::byte> bytes, std::uint64_t seed = 14695981039346656037ull);

}  // namespace cwc
