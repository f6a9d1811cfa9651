#include "cwc/cli/commands.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "cwc/checkpoint.hpp"
#include "cwc/cli/feature_export.hpp"
#include "cwc/complexity.hpp"
#include "cwc/errors.hpp"

namespace cwc::cli {

namespace fs = std::filesystem;

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

std::string format_summary(const SummaryLine& line) {
  char error[32];
  std::snprintf(error, sizeof error, "%.2f", line.test_error_pct);
  return line.dataset + ", " + line.model + ", " + error + ", " + std::to_string(line.epochs) +
         ", " + std::to_string(line.seed);
}

namespace {

std::string with_commas(std::uint64_t value) {
  std::string digits = std::to_string(value);
  for (std::ptrdiff_t i = static_cast<std::ptrdiff_t>(digits.size()) - 3; i > 0; i -= 3) {
    digits.insert(static_cast<std::size_t>(i), ",");
  }
  return digits;
}

std::string millions(std::uint64_t value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", static_cast<double>(value) / 1e6);
  return buf;
}

DatasetPair load_limited(const RunConfig& config, const ChannelStats* stats = nullptr) {
  DatasetPair data = load_dataset(config.data.kind, config.data.path, stats);
  data.train = take_first(data.train, config.data.train_limit);
  data.test = take_first(data.test, config.data.test_limit);
  return data;
}

std::optional<double> error_for(const EvaluationResult& result, PredictorKind kind) {
  switch (kind) {
    case PredictorKind::Softmax:
      return result.softmax_error;
    case PredictorKind::Goodness:
      return result.goodness_error;
    case PredictorKind::GlobalAveraging:
      return result.ga_error;
  }
  return std::nullopt;
}

void print_epoch(const EpochMetrics& m, std::ostream& log) {
  char buf[64];
  log << "epoch " << m.epoch;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    std::snprintf(buf, sizeof buf, " L%zu%s %.4f/%.1f%%", i + 1, m.layers[i].trained ? "" : "*",
                  m.layers[i].train_loss, m.layers[i].goodness_accuracy);
    log << buf;
  }
  auto err = [&](const char* name, const std::optional<double>& v) {
    if (v) {
      std::snprintf(buf, sizeof buf, " %s %.2f%%", name, *v);
      log << buf;
    }
  };
  err("sf", m.softmax_test_error);
  err("gd", m.goodness_test_error);
  err("ga", m.ga_test_error);
  std::snprintf(buf, sizeof buf, " (%.1fs)", m.seconds);
  log << buf << std::endl;
}

}  // namespace

void cmd_count_params(const RunConfig& config, bool csv, std::ostream& out) {
  const NetworkConfig& net = config.network;
  const ComplexityReport report = count_complexity(net);
  if (csv) {
    out << "component,output_shape,conv_params,bn_params,mult_adds\n";
    for (const LayerComplexity& layer : report.layers) {
      out << layer.name << ',' << layer.output.c << 'x' << layer.output.h << 'x' << layer.output.w
          << ',' << layer.conv_parameters << ',' << layer.batchnorm_parameters << ','
          << layer.mult_adds << '\n';
    }
    if (net.uses(PredictorKind::Softmax)) {
      out << "softmax_head,," << report.softmax_head_parameters << ",0,"
          << report.softmax_head_mult_adds << '\n';
    }
    if (net.uses(PredictorKind::Goodness)) {
      out << "goodness_head,," << report.goodness_head_parameters << ",0,"
          << report.goodness_head_mult_adds << '\n';
    }
    out << "total,," << report.total_parameters() << ",," << report.total_mult_adds() << '\n';
  } else {
    out << "input " << net.input.channels << 'x' << net.input.height << 'x' << net.input.width
        << ", " << net.classes << " classes\n";
    for (const LayerComplexity& layer : report.layers) {
      const std::string shape = std::to_string(layer.output.c) + 'x' +
                                std::to_string(layer.output.h) + 'x' +
                                std::to_string(layer.output.w);
      char line[160];
      std::snprintf(line, sizeof line, "%-14s out %-10s  conv+bn params %10s  mult-adds %10s\n",
                    layer.name.c_str(), shape.c_str(),
                    with_commas(layer.conv_parameters + layer.batchnorm_parameters).c_str(),
                    with_commas(layer.mult_adds).c_str());
      out << line;
    }
    if (net.uses(PredictorKind::Softmax)) {
      out << "softmax head    params " << with_commas(report.softmax_head_parameters)
          << "  mult-adds " << with_commas(report.softmax_head_mult_adds) << '\n';
    }
    if (net.uses(PredictorKind::Goodness)) {
      out << "goodness head   params " << with_commas(report.goodness_head_parameters)
          << "  mult-adds " << with_commas(report.goodness_head_mult_adds) << '\n';
    }
    out << "total parameters " << with_commas(report.total_parameters()) << '\n'
        << "total mult-adds " << millions(report.total_mult_adds()) << "M ("
        << kMultAddConvention << ")\n";
  }
}

std::vector<SummaryLine> cmd_train(const RunConfig& config, std::ostream& log) {
  const fs::path& out = config.run.out;
  DatasetPair data = load_limited(config);
  fs::create_directories(out);

  Network network(config.network, config.run.seed);
  PredictorHeads heads = PredictorHeads::for_config(config.network, config.run.seed);
  TrainerOptions options;
  options.seed = config.run.seed;
  options.epochs = config.run.epochs;

  std::ofstream(out / "run.cfg", std::ios::trunc) << serialize_run_config(config);
  fs::remove(out / "metrics.csv");
  MetricsCsv metrics(out / "metrics.csv");
  log << "training " << model_label(config.network, config.network.predictors.front()) << " on "
      << data.train.size() << " " << to_string(config.data.kind) << " samples, seed "
      << config.run.seed << std::endl;

  EvaluationResult last;
  std::size_t epochs_run = 0;
  run_interleaved_training(
      network, heads, config.network.schedule, data.train, &data.test, options,
      [&](const EpochMetrics& m, const Network& net, const PredictorHeads& h) {
        metrics.write(m);
        print_epoch(m, log);
        last = {m.softmax_test_error, m.goodness_test_error, m.ga_test_error};
        epochs_run = m.epoch;
        if (config.run.checkpoint_every > 0 && m.epoch % config.run.checkpoint_every == 0) {
          save_checkpoint(out / ("epoch_" + std::to_string(m.epoch) + ".ckpt"), net, h, data.stats,
                          m.epoch);
        }
      });
  if (epochs_run == 0) {
    last = evaluate_all(network, heads, data.test);
  }

  save_checkpoint(out / "final.ckpt", network, heads, data.stats, epochs_run);
  write_manifest(out / "final.manifest", network, epochs_run);

  std::vector<SummaryLine> lines;
  std::ofstream summary(out / "summary.txt", std::ios::trunc);
  for (PredictorKind kind : config.network.predictors) {
    SummaryLine line{std::string(to_string(config.data.kind)), model_label(config.network, kind),
                     error_for(last, kind).value_or(100.0), epochs_run, config.run.seed};
    summary << format_summary(line) << '\n';
    lines.push_back(std::move(line));
  }
  return lines;
}

EvaluationResult cmd_eval(const RunConfig& config, const fs::path& checkpoint, Split split,
                          std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  DatasetPair data = load_limited(config, &ckpt.stats);
  const Dataset& dataset = split == Split::Test ? data.test : data.train;
  const EvaluationResult result = evaluate_all(ckpt.network, ckpt.heads, dataset);
  for (PredictorKind kind : ckpt.network.config().predictors) {
    SummaryLine line{std::string(to_string(config.data.kind)),
                     model_label(ckpt.network.config(), kind), *error_for(result, kind),
                     ckpt.epoch, config.run.seed};
    out << format_summary(line) << '\n';
  }
  return result;
}

std::vector<fs::path> cmd_export_features(const RunConfig& config, const fs::path& checkpoint,
                                          std::size_t index, Split split,
                                          const fs::path& directory) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  DatasetPair data = load_limited(config, &ckpt.stats);
  const Dataset& dataset = split == Split::Test ? data.test : data.train;
  if (index >= dataset.size()) {
    throw DataError("sample index " + std::to_string(index) + " out of range for " +
                    std::to_string(dataset.size()) + " samples");
  }
  const FeatureTensor sample = dataset.images.slice_batch(index, 1);
  const FeatureGrid grid = feature_grid(ckpt.network, sample);
  return write_feature_grid(grid, directory, index, dataset.labels[index]);
}

IltSchedule cmd_discover_schedule(const RunConfig& config, const SessionFactory& sessions,
                                  const fs::path& output, std::ostream& log) {
  DiscoveryOptions options;
  options.max_epoch = config.network.schedule.max_epoch;
  options.detector = config.discovery.detector;
  options.fast_mode = config.network.schedule.fast_mode;
  options.overlap = config.network.schedule.overlap;

  const DiscoveryResult result =
      discover_schedule(config.network.layers.size(), options, sessions);
  for (const std::string& warning : result.warnings) {
    log << "warning: " << warning << '\n';
  }
  RunConfig updated = config;
  updated.network.schedule = result.schedule;
  updated.network.validate();
  if (output.has_parent_path()) {
    fs::create_directories(output.parent_path());
  }
  std::ofstream file(output, std::ios::trunc);
  if (!file) {
    throw DataError("cannot write schedule file " + output.string());
  }
  file << serialize_run_config(updated);
  log << "schedule written to " << output.string() << '\n';
  return result.schedule;
}

IltSchedule cmd_discover_schedule(const RunConfig& config, const fs::path& output,
                                  std::ostream& log) {
  DatasetPair data = load_limited(config);
  return cmd_discover_schedule(config, network_sessions(config.network, data.train, config.run.seed),
                               output, log);
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Channel-wise competitive forward learning"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  bool csv = false;
  app.add_option("--config", config_path, "run configuration file");
  app.add_option("--seed", seed, "random seed (overrides [run] seed)");
  app.add_option("--out", out_dir, "output directory (overrides [run] out)");
  app.add_flag("--csv", csv, "machine-readable output");

  auto* train = app.add_subcommand("train", "train a network");
  std::optional<std::size_t> epochs;
  train->add_option("--epochs", epochs, "number of epochs (overrides [run] epochs)");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string checkpoint;
  std::string split_name = "test";
  eval->add_option("--checkpoint", checkpoint, "checkpoint file (default <out>/final.ckpt)");
  eval->add_option("--split", split_name, "train or test")->check(CLI::IsMember({"train", "test"}));

  auto* count = app.add_subcommand("count-params", "parameter and mult-add counts");

  auto* features = app.add_subcommand("export-features", "per-class feature maps of one sample");
  std::size_t index = 0;
  std::string feature_dir;
  features->add_option("--checkpoint", checkpoint, "checkpoint file (default <out>/final.ckpt)");
  features->add_option("--index", index, "sample index")->required();
  features->add_option("--split", split_name, "train or test")
      ->check(CLI::IsMember({"train", "test"}));
  features->add_option("--dir", feature_dir, "output directory (default <out>/features)");

  auto* discover = app.add_subcommand("discover-schedule", "find per-layer training windows");
  bool fast = false;
  std::optional<std::size_t> overlap;
  std::string schedule_path;
  discover->add_flag("--fast", fast, "start each layer before its predecessor plateaus");
  discover->add_option("--overlap", overlap, "fast-mode overlap in epochs");
  discover->add_option("--output", schedule_path, "schedule file (default <out>/schedule.cfg)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfigError;
  }

  try {
    RunConfig config = config_path.empty() ? parse_with_env("", "<defaults>", process_env)
                                           : load_run_config(config_path);
    if (seed) {
      config.run.seed = *seed;
    }
    if (!out_dir.empty()) {
      config.run.out = out_dir;
    }
    const fs::path default_checkpoint = config.run.out / "final.ckpt";
    const Split split = split_name == "train" ? Split::Train : Split::Test;

    if (train->parsed()) {
      if (epochs) {
        config.run.epochs = *epochs;
      }
      for (const SummaryLine& line : cmd_train(config, err)) {
        out << format_summary(line) << '\n';
      }
    } else if (eval->parsed()) {
      cmd_eval(config, checkpoint.empty() ? default_checkpoint : fs::path(checkpoint), split, out);
    } else if (count->parsed()) {
      cmd_count_params(config, csv, out);
    } else if (features->parsed()) {
      const auto written = cmd_export_features(
          config, checkpoint.empty() ? default_checkpoint : fs::path(checkpoint), index, split,
          feature_dir.empty() ? config.run.out / "features" : fs::path(feature_dir));
      out << "wrote " << written.size() << " feature maps\n";
    } else if (discover->parsed()) {
      if (fast) {
        config.network.schedule.fast_mode = true;
      }
      if (overlap) {
        config.network.schedule.overlap = *overlap;
      }
      cmd_discover_schedule(config,
                            schedule_path.empty() ? config.run.out / "schedule.cfg"
                                                  : fs::path(schedule_path),
                            err);
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitDataError;
  } catch (const NumericalError& e) {
    err << "diverged: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kExitDataError;
  }
  return kExitOk;
}

}  // namespace cwc::cli
