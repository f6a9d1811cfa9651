#include "cwc/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <utility>

#include "cwc/errors.hpp"

namespace cwc {

PredictorHeads PredictorHeads::for_config(const NetworkConfig& config, std::uint64_t seed) {
  PredictorHeads heads;
  const std::size_t features = config.flattened_features();
  if (config.uses(PredictorKind::Softmax)) {
    heads.softmax.emplace(features, config.classes, config.optimizer);
  }
  if (config.uses(PredictorKind::Goodness)) {
    heads.goodness.emplace(features, config.classes, config.goodness_head, config.optimizer,
                           seed ^ 0x5bd1e995ull);
  }
  heads.global_averaging = config.uses(PredictorKind::GlobalAveraging);
  return heads;
}

bool PredictorHeads::has(PredictorKind kind) const {
  switch (kind) {
    case PredictorKind::Softmax:
      return softmax.has_value();
    case PredictorKind::Goodness:
      return goodness.has_value();
    case PredictorKind::GlobalAveraging:
      return global_averaging;
  }
  return false;
}

namespace {

std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch) {
  return seed ^ (0x9e3779b97f4a7c15ull * (static_cast<std::uint64_t>(epoch) + 1));
}

double error_percent(std::size_t wrong, std::size_t total) {
  return 100.0 * static_cast<double>(wrong) / static_cast<double>(total);
}

}  // namespace

InterleavedTrainer::InterleavedTrainer(Network& network, PredictorHeads& heads,
                                       const Dataset& train, const Dataset* test,
                                       TrainerOptions options)
    : network_(network), heads_(heads), train_(train), test_(test), options_(options) {
  if (train_.size() == 0) {
    throw DataError("training split is empty");
  }
}

EpochMetrics InterleavedTrainer::run_epoch(std::size_t epoch, const IltSchedule& schedule) {
  const auto started = std::chrono::steady_clock::now();
  const std::size_t layers = network_.layer_count();

  BatchPlan plan;
  plan.update.assign(layers, false);
  plan.bn_training.assign(layers, false);
  for (std::size_t i = 0; i < layers; ++i) {
    TrainedLayer& layer = network_.layer(i);
    if (epoch > schedule.plateau_epoch[i]) {
      layer.frozen = true;
    }
    plan.update[i] = !layer.frozen && schedule.trains(i, epoch);
    plan.bn_training[i] = plan.update[i];
  }

  EpochMetrics metrics;
  metrics.epoch = epoch;
  metrics.layers.assign(layers, {});
  std::vector<std::size_t> correct(layers, 0);
  double softmax_loss = 0.0;
  double goodness_loss = 0.0;
  std::size_t seen = 0;

  BatchIterator batches(train_, network_.config().batch_size, epoch_seed(options_.seed, epoch));
  while (auto batch = batches.next()) {
    const std::size_t n = batch->labels.size();
    BatchResult result;
    try {
      result = network_.train_batch(batch->images, batch->labels, plan);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + " (epoch " + std::to_string(epoch) + ")");
    }
    for (std::size_t i = 0; i < layers; ++i) {
      metrics.layers[i].train_loss += result.layers[i].loss * static_cast<double>(n);
      correct[i] += result.layers[i].correct;
    }
    if (heads_.softmax) {
      softmax_loss += heads_.softmax->train_step(result.features, batch->labels) *
                      static_cast<double>(n);
    }
    if (heads_.goodness) {
      goodness_loss += heads_.goodness->train_step(result.features, batch->labels) *
                       static_cast<double>(n);
    }
    seen += n;
  }

  for (std::size_t i = 0; i < layers; ++i) {
    metrics.layers[i].train_loss /= static_cast<double>(seen);
    metrics.layers[i].goodness_accuracy = 100.0 * static_cast<double>(correct[i]) /
                                          static_cast<double>(seen);
    metrics.layers[i].trained = plan.update[i];
    if (plan.update[i]) {
      ++network_.layer(i).epochs_trained;
    }
  }
  if (heads_.softmax) {
    metrics.softmax_train_loss = softmax_loss / static_cast<double>(seen);
  }
  if (heads_.goodness) {
    metrics.goodness_train_loss = goodness_loss / static_cast<double>(seen);
  }

  if (options_.evaluate_each_epoch && test_ != nullptr) {
    const EvaluationResult eval = evaluate_all(network_, heads_, *test_, options_.eval_batch_size);
    metrics.softmax_test_error = eval.softmax_error;
    metrics.goodness_test_error = eval.goodness_error;
    metrics.ga_test_error = eval.ga_error;
  }
  metrics.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return metrics;
}

std::vector<EpochMetrics> InterleavedTrainer::run(const IltSchedule& schedule,
                                                  const EpochCallback& on_epoch) {
  schedule.validate(network_.layer_count());
  const std::size_t epochs = options_.epochs.value_or(schedule.last_training_epoch());
  std::vector<EpochMetrics> history;
  history.reserve(epochs);
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    history.push_back(run_epoch(epoch, schedule));
    if (on_epoch) {
      on_epoch(history.back(), network_, heads_);
    }
  }
  return history;
}

std::vector<EpochMetrics> run_interleaved_training(Network& network, PredictorHeads& heads,
                                                   const IltSchedule& schedule,
                                                   const Dataset& train, const Dataset* test,
                                                   const TrainerOptions& options,
                                                   const EpochCallback& on_epoch) {
  InterleavedTrainer trainer(network, heads, train, test, options);
  return trainer.run(schedule, on_epoch);
}

EvaluationResult evaluate_all(const Network& network, const PredictorHeads& heads,
                              const Dataset& split, std::size_t batch_size) {
  if (split.size() == 0) {
    throw ConfigError("cannot evaluate on an empty split");
  }
  std::size_t wrong_sf = 0;
  std::size_t wrong_gd = 0;
  std::size_t wrong_ga = 0;
  const std::size_t classes = network.config().classes;

  BatchIterator batches(split, batch_size);
  while (auto batch = batches.next()) {
    const InferenceResult inferred = network.infer(batch->images);
    auto count_wrong = [&](const std::vector<Prediction>& predictions, std::size_t& wrong) {
      for (std::size_t n = 0; n < predictions.size(); ++n) {
        wrong += predictions[n].label != batch->labels[n] ? 1 : 0;
      }
    };
    if (heads.softmax) {
      count_wrong(heads.softmax->predict(inferred.features), wrong_sf);
    }
    if (heads.goodness) {
      count_wrong(heads.goodness->predict(inferred.features), wrong_gd);
    }
    if (heads.global_averaging) {
      count_wrong(ga_predict(inferred.last_activation, classes), wrong_ga);
    }
  }

  EvaluationResult result;
  if (heads.softmax) {
    result.softmax_error = error_percent(wrong_sf, split.size());
  }
  if (heads.goodness) {
    result.goodness_error = error_percent(wrong_gd, split.size());
  }
  if (heads.global_averaging) {
    result.ga_error = error_percent(wrong_ga, split.size());
  }
  return result;
}

double evaluate(const Network& network, const PredictorHeads& heads, PredictorKind predictor,
                const Dataset& split, std::size_t batch_size) {
  if (!heads.has(predictor)) {
    throw ConfigError("predictor " + std::string(to_string(predictor)) + " is not configured");
  }
  const EvaluationResult result = evaluate_all(network, heads, split, batch_size);
  switch (predictor) {
    case PredictorKind::Softmax:
      return *result.softmax_error;
    case PredictorKind::Goodness:
      return *result.goodness_error;
    case PredictorKind::GlobalAveraging:
      return *result.ga_error;
  }
  return 0.0;
}

DiscoveryResult discover_schedule(std::size_t layer_count, const DiscoveryOptions& options,
                                  const SessionFactory& factory) {
  if (layer_count == 0) {
    throw ConfigError("schedule discovery needs at least one layer");
  }
  if (options.max_epoch == 0) {
    throw ConfigError("schedule discovery needs max_epoch >= 1");
  }
  if (options.detector.window == 0) {
    throw ConfigError("plateau window must be positive");
  }

  DiscoveryResult result;
  IltSchedule& schedule = result.schedule;
  schedule.start_epoch.assign(layer_count, 0);
  schedule.plateau_epoch.assign(layer_count, options.max_epoch);
  schedule.max_epoch = options.max_epoch;
  schedule.overlap = options.overlap;
  schedule.fast_mode = options.fast_mode;

  for (std::size_t round = 0; round < layer_count; ++round) {
    if (options.fast_mode && round > 0) {
      schedule.start_epoch[round] =
          fast_mode_start(schedule.plateau_epoch[round - 1], options.overlap);
    }
    std::unique_ptr<DiscoverySession> session = factory(round);
    std::vector<double> history;
    std::optional<std::size_t> plateau;

    for (std::size_t epoch = 1; epoch <= options.max_epoch && !plateau; ++epoch) {
      std::vector<bool> mask(round + 1, false);
      for (std::size_t i = 0; i < round; ++i) {
        mask[i] = schedule.trains(i, epoch);
      }
      mask[round] = epoch >= schedule.start_epoch[round];
      const std::vector<double> losses = session->run_epoch(epoch, mask);
      if (losses.size() <= round) {
        throw ConfigError("discovery session returned " + std::to_string(losses.size()) +
                          " losses in round " + std::to_string(round + 1));
      }
      if (!mask[round]) {
        continue;
      }
      history.push_back(losses[round]);
      if (detect_plateau(history, options.detector)) {
        plateau = epoch > options.detector.window ? epoch - options.detector.window : 0;
      }
    }

    if (plateau) {
      schedule.plateau_epoch[round] = std::max(*plateau, schedule.start_epoch[round]);
    } else {
      schedule.plateau_epoch[round] = options.max_epoch;
      result.warnings.push_back("layer " + std::to_string(round + 1) +
                                " did not plateau within " + std::to_string(options.max_epoch) +
                                " epochs");
    }
  }
  return result;
}

namespace {

class NetworkSession final : public DiscoverySession {
 public:
  NetworkSession(NetworkConfig config, const Dataset& train, std::uint64_t seed)
      : network_(std::move(config), seed), train_(train), seed_(seed) {}

  std::vector<double> run_epoch(std::size_t epoch, const std::vector<bool>& train_mask) override {
    BatchPlan plan;
    plan.update = train_mask;
    plan.update.resize(network_.layer_count(), false);
    plan.bn_training = plan.update;

    std::vector<double> losses(network_.layer_count(), 0.0);
    std::size_t seen = 0;
    BatchIterator batches(train_, network_.config().batch_size, epoch_seed(seed_, epoch));
    while (auto batch = batches.next()) {
      const BatchResult result = network_.train_batch(batch->images, batch->labels, plan);
      const auto n = static_cast<double>(batch->labels.size());
      for (std::size_t i = 0; i < losses.size(); ++i) {
        losses[i] += result.layers[i].loss * n;
      }
      seen += batch->labels.size();
    }
    for (double& loss : losses) {
      loss /= static_cast<double>(seen);
    }
    return losses;
  }

 private:
  Network network_;
  const Dataset& train_;
  std::uint64_t seed_;
};

}  // namespace

SessionFactory network_sessions(const NetworkConfig& config, const Dataset& train,
                                std::uint64_t seed) {
  if (train.size() == 0) {
    throw DataError("training split is empty");
  }
  return [config, &train, seed](std::size_t round) -> std::unique_ptr<DiscoverySession> {
    NetworkConfig prefix = config;
    prefix.layers.resize(round + 1);
    std::vector<std::size_t> plateaus(round + 1, 1);
    prefix.schedule = IltSchedule::from_plateaus(plateaus);
    return std::make_unique<NetworkSession>(std::move(prefix), train, seed);
  };
}

MetricsCsv::MetricsCsv(const std::filesystem::path& path) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  out_.open(path, std::ios::app);
  if (!out_) {
    throw DataError("cannot open metrics file " + path.string());
  }
  if (fresh) {
    out_ << kHeader << '\n';
  }
}

void MetricsCsv::write(const EpochMetrics& metrics) {
  auto optional_cell = [](const std::optional<double>& value) {
    if (!value) {
      return std::string();
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", *value);
    return std::string(buf);
  };
  const std::string sf = optional_cell(metrics.softmax_test_error);
  const std::string gd = optional_cell(metrics.goodness_test_error);
  const std::string ga = optional_cell(metrics.ga_test_error);
  for (std::size_t i = 0; i < metrics.layers.size(); ++i) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.6f,%.4f,", metrics.epoch, i + 1,
                  metrics.layers[i].train_loss, metrics.layers[i].goodness_accuracy);
    char secs[32];
    std::snprintf(secs, sizeof secs, "%.3f", metrics.seconds);
    out_ << buf << sf << ',' << gd << ',' << ga << ',' << secs << '\n';
  }
  out_.flush();
}

}  // namespace cwc
