#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cwc/datasets.hpp"
#include "cwc/network.hpp"
#include "cwc/predictors.hpp"
#include "cwc/schedule.hpp"

namespace cwc {

/// The classification heads attached to a backbone. GA needs no parameters.
struct PredictorHeads {
  std::optional<SoftmaxHead> softmax;
  std::optional<GoodnessHead> goodness;
  bool global_averaging = false;

  /// Heads selected by `config.predictors`, sized for its final block.
  static PredictorHeads for_config(const NetworkConfig& config, std::uint64_t seed);
  [[nodiscard]] bool has(PredictorKind kind) const;
};

struct LayerEpochStats {
  /// Sample-weighted mean of the layer's local loss over the epoch.
  double train_loss = 0.0;
  /// Percentage of training samples whose goodness argmax hits the target.
  double goodness_accuracy = 0.0;
  bool trained = false;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  std::vector<LayerEpochStats> layers;
  std::optional<double> softmax_train_loss;
  std::optional<double> goodness_train_loss;
  /// Test errors in percent.
  std::optional<double> softmax_test_error;
  std::optional<double> goodness_test_error;
  std::optional<double> ga_test_error;
  double seconds = 0.0;
};

struct TrainerOptions {
  std::uint64_t seed = 0;
  /// Total epochs; unset runs until the last layer's plateau.
  std::optional<std::size_t> epochs;
  /// Evaluate every head on the test split after each epoch.
  bool evaluate_each_epoch = true;
  std::size_t eval_batch_size = 250;
};

using EpochCallback =
    std::function<void(const EpochMetrics&, const Network&, const PredictorHeads&)>;

/// Interleaved layer training: in epoch e, layer i takes local Adam steps iff
/// start_epoch[i] <= e <= plateau_epoch[i]; past its plateau a layer is frozen.
/// The heads train every epoch on the final block's output.
class InterleavedTrainer {
 public:
  InterleavedTrainer(Network& network, PredictorHeads& heads, const Dataset& train,
                     const Dataset* test, TrainerOptions options);

  std::vector<EpochMetrics> run(const IltSchedule& schedule, const EpochCallback& on_epoch = {});
  EpochMetrics run_epoch(std::size_t epoch, const IltSchedule& schedule);

 private:
  Network& network_;
  PredictorHeads& heads_;
  const Dataset& train_;
  const Dataset* test_;
  TrainerOptions options_;
};

std::vector<EpochMetrics> run_interleaved_training(Network& network, PredictorHeads& heads,
                                                   const IltSchedule& schedule,
                                                   const Dataset& train, const Dataset* test,
                                                   const TrainerOptions& options,
                                                   const EpochCallback& on_epoch = {});

struct EvaluationResult {
  std::optional<double> softmax_error;
  std::optional<double> goodness_error;
  std::optional<double> ga_error;
};

/// Top-1 error (percent) of every available head over `split`, inference
/// mode. Throws ConfigError on an empty split.
EvaluationResult evaluate_all(const Network& network, const PredictorHeads& heads,
                              const Dataset& split, std::size_t batch_size = 250);

/// Top-1 error (percent) of one head.
double evaluate(const Network& network, const PredictorHeads& heads, PredictorKind predictor,
                const Dataset& split, std::size_t batch_size = 250);

// ---------------------------------------------------------------------------
// Schedule discovery.

/// One discovery round: a freshly initialized network trained epoch by epoch.
class DiscoverySession {
 public:
  virtual ~DiscoverySession() = default;
  /// Trains the layers flagged in `train_mask` for one epoch and returns
  /// every layer's mean local loss.
  virtual std::vector<double> run_epoch(std::size_t epoch, const std::vector<bool>& train_mask) = 0;
};

/// Builds the session for round `round` (0-based), which trains layers
/// 0..round.
using SessionFactory = std::function<std::unique_ptr<DiscoverySession>(std::size_t round)>;

struct DiscoveryOptions {
  std::size_t max_epoch = 50;
  PlateauDetector detector;
  bool fast_mode = false;
  std::size_t overlap = 3;
};

struct DiscoveryResult {
  IltSchedule schedule;
  std::vector<std::string> warnings;
};

/// For each layer in turn, retrains layers 0..i from scratch under the
/// windows already fixed for layers < i and records the epoch after which
/// layer i stops improving (detection epoch minus the window). In fast mode
/// the next layer starts `overlap` epochs before that plateau.
DiscoveryResult discover_schedule(std::size_t layer_count, const DiscoveryOptions& options,
                                  const SessionFactory& factory);

/// Sessions that train prefixes of `config`'s network on `train`.
SessionFactory network_sessions(const NetworkConfig& config, const Dataset& train,
                                std::uint64_t seed);

// ---------------------------------------------------------------------------
// Metrics stream.

/// Append-only CSV, one row per (epoch, layer):
/// epoch,layer_id,train_loss,layer_goodness_acc,sf_test_err,gd_test_err,ga_test_err,seconds
class MetricsCsv {
 public:
  explicit MetricsCsv(const std::filesystem::path& path);
  void write(const EpochMetrics& metrics);

  static constexpr const char* kHeader =
      "epoch,layer_id,train_loss,layer_goodness_acc,sf_test_err,gd_test_err,ga_test_err,seconds";

 private:
  std::ofstream out_;
};

}  // namespace cwc
