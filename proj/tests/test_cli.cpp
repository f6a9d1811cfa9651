#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <sstream>

#include "cwc/checkpoint.hpp"
#include "cwc/cli/commands.hpp"
#include "cwc/cli/feature_export.hpp"
#include "cwc/cli/run_config.hpp"
#include "cwc/errors.hpp"
#include "synthetic.hpp"
#include "temp_dir.hpp"

namespace cwc::cli {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

const fs::path kConfigs = CWC_CONFIG_DIR;

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Invocation {
  int code = 0;
  std::string out;
  std::string err;
};

Invocation invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "cwc");
  std::vector<const char*> argv;
  for (const std::string& a : args) {
    argv.push_back(a.c_str());
  }
  std::ostringstream out;
  std::ostringstream err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

using Overrides = std::map<std::string, std::string>;

// Small balanced MNIST-shaped data and a two-layer network that trains in
// well under a second per epoch.
struct Workspace {
  TempDir dir;
  fs::path data = dir / "data";
  fs::path out = dir / "out";
  fs::path config = dir / "run.cfg";

  // Keys given as "section.key" replace or extend the base file.
  explicit Workspace(const Overrides& overrides = {}) {
    fs::create_directories(data);
    const Dataset train = testing::striped_dataset(60, 10, 28, 1);
    const Dataset test = testing::striped_dataset(30, 10, 28, 2, Split::Test);
    write_idx(train, data / "train-images-idx3-ubyte", data / "train-labels-idx1-ubyte");
    write_idx(test, data / "t10k-images-idx3-ubyte", data / "t10k-labels-idx1-ubyte");
    std::map<std::string, std::map<std::string, std::string>> sections{
        {"data", {{"dataset", "mnist"}, {"path", data.string()}}},
        {"conv", {{"channels", "10, 20"}, {"grouped", "no, yes"}}},
        {"pooling", {{"maxpool", "no, yes"}}},
        {"optimizer", {{"batch_size", "16"}}},
        {"ilt", {{"plateau_epoch", "2, 2"}}},
        {"predictor", {{"heads", "softmax, goodness, ga"}, {"goodness_hidden", "16"}}},
        {"run", {{"out", out.string()}, {"epochs", "2"}}},
    };
    for (const auto& [name, value] : overrides) {
      const auto dot = name.find('.');
      sections[name.substr(0, dot)][name.substr(dot + 1)] = value;
    }
    std::ofstream file(config);
    for (const auto& [section, keys] : sections) {
      file << '[' << section << "]\n";
      for (const auto& [key, value] : keys) {
        file << key << " = " << value << '\n';
      }
    }
  }
};

// ---------------------------------------------------------------------------

TEST(RunConfig, ShippedConfigsRoundTrip) {
  std::size_t seen = 0;
  for (const auto& entry : fs::directory_iterator(kConfigs)) {
    if (entry.path().extension() != ".cfg") {
      continue;
    }
    ++seen;
    const RunConfig parsed = load_run_config(entry.path());
    const std::string text = serialize_run_config(parsed);
    const RunConfig again = parse_run_config(text);
    EXPECT_EQ(again, parsed) << entry.path();
    EXPECT_EQ(serialize_run_config(again), text) << entry.path();
  }
  EXPECT_GE(seen, 8u);
}

TEST(RunConfig, ShippedConfigsHoldTheDefaultSetups) {
  const RunConfig cfse = load_run_config(kConfigs / "cfse_mnist.cfg");
  EXPECT_EQ(cfse.network.layers.size(), 4u);
  EXPECT_EQ(cfse.network.schedule.plateau_epoch, (std::vector<std::size_t>{10, 15, 19, 25}));
  EXPECT_FLOAT_EQ(cfse.network.optimizer.learning_rate, 0.01f);
  EXPECT_EQ(cfse.network.batch_size, 128u);
  EXPECT_EQ(cfse.network.goodness_head.hidden, 1024u);
  const RunConfig ff = load_run_config(kConfigs / "ff_cnn_cifar10.cfg");
  EXPECT_EQ(ff.data.kind, DatasetKind::Cifar10);
  EXPECT_EQ(ff.network.input, (InputShape{3, 32, 32}));
  for (const LayerSpec& spec : ff.network.layers) {
    EXPECT_FALSE(spec.grouped);
  }
  EXPECT_EQ(load_run_config(kConfigs / "cfse_mnist_pvn.cfg").network.layers[0].loss,
            LossKind::PvN);
}

TEST(RunConfig, DefaultsAreTheCfseMnistSetup) {
  const RunConfig c = parse_run_config("");
  NetworkConfig expected = NetworkConfig::cfse(InputShape{1, 28, 28});
  // Discovery may run past the default plateaus.
  expected.schedule.max_epoch = 50;
  EXPECT_EQ(c.network, expected);
  EXPECT_FALSE(c.run.epochs.has_value());
  EXPECT_EQ(parse_run_config("[run]\nepochs = auto\n").run.epochs, std::nullopt);
  EXPECT_EQ(parse_run_config("[run]\nepochs = 7\n").run.epochs, 7u);
}

TEST(RunConfig, RejectsUnknownAndMalformedInput) {
  for (const char* text : {
           "[data]\ncolour = red\n",
           "[mystery]\nkey = 1\n",
           "stray = 1\n",
           "[optimizer]\nlearning_rate = fast\n",
           "[optimizer]\nmethod = sgd\n",
           "[loss]\ntype = hinge\n",
           "[conv]\nchannels = 20, 80\n",
           "[conv]\nchannels = 20, 80\ngrouped = no, yes\n[pooling]\nmaxpool = no\n"
           "[ilt]\nplateau_epoch = 1, 1\n",
           "[data]\ndataset = mnist\ndataset = cifar10\n",
           "[predictor]\nheads = oracle\n",
           "[ilt]\nstart_epoch = 0, 0, 0, 30\n",
       }) {
    EXPECT_THROW(parse_run_config(text, "t.cfg"), ConfigError) << text;
  }
  try {
    parse_run_config("[data]\ncolour = red\n", "t.cfg");
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("colour"), std::string::npos) << e.what();
  }
}

TEST(RunConfig, EnvironmentOverridesConfigKeys) {
  EXPECT_EQ(env_name("optimizer", "learning_rate"), "CWC_OPTIMIZER_LEARNING_RATE");
  std::map<std::string, std::string> env{{"CWC_OPTIMIZER_LEARNING_RATE", "0.05"},
                                         {"CWC_RUN_SEED", "9"}};
  const EnvLookup lookup = [&](const std::string& name) -> std::optional<std::string> {
    const auto it = env.find(name);
    return it == env.end() ? std::nullopt : std::optional(it->second);
  };
  const RunConfig c = parse_with_env("[optimizer]\nlearning_rate = 0.01\n", "t", lookup);
  EXPECT_FLOAT_EQ(c.network.optimizer.learning_rate, 0.05f);
  EXPECT_EQ(c.run.seed, 9u);
  env["CWC_LOSS_TYPE"] = "bogus";
  EXPECT_THROW(parse_with_env("", "t", lookup), ConfigError);
}

TEST(Labels, ModelNamesAndSummaryLine) {
  const NetworkConfig cfse = NetworkConfig::cfse(InputShape{});
  EXPECT_EQ(model_label(cfse, PredictorKind::Softmax), "CFSE_CwC+Sf");
  EXPECT_EQ(model_label(cfse, PredictorKind::Goodness), "CFSE_CwC+Gd");
  EXPECT_EQ(model_label(NetworkConfig::ff_cnn(InputShape{}, 10, LossKind::PvN),
                        PredictorKind::GlobalAveraging),
            "FF-CNN_PvN_GA");
  EXPECT_EQ(format_summary({"mnist", "CFSE_CwC+Sf", 1.234, 10, 0}), "mnist, CFSE_CwC+Sf, 1.23, 10, 0");
  EXPECT_EQ(input_shape_for(DatasetKind::Cifar10), (InputShape{3, 32, 32}));
}

// ---------------------------------------------------------------------------

TEST(CountParams, PrintsTheTotals) {
  const auto ga = invoke({"count-params", "--config", (kConfigs / "cfse_cifar10_ga.cfg").string()});
  EXPECT_EQ(ga.code, 0) << ga.err;
  EXPECT_NE(ga.out.find("total parameters 280,920"), std::string::npos) << ga.out;

  const auto ff = invoke({"count-params", "--config", (kConfigs / "ff_cnn_cifar10.cfg").string()});
  EXPECT_NE(ff.out.find("total parameters 1,534,210"), std::string::npos) << ff.out;

  const auto sf = invoke({"count-params", "--config", (kConfigs / "cfse_cifar10.cfg").string()});
  EXPECT_NE(sf.out.find("total parameters 588,130"), std::string::npos) << sf.out;
  EXPECT_NE(sf.out.find("params 307,210"), std::string::npos) << sf.out;
  EXPECT_EQ(ga.out.find("softmax head"), std::string::npos) << ga.out;
}

TEST(CountParams, CsvIsMachineReadable) {
  const auto r =
      invoke({"--csv", "count-params", "--config", (kConfigs / "ff_cnn_cifar10_ga.cfg").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream lines(r.out);
  std::string header;
  std::getline(lines, header);
  EXPECT_EQ(header, "component,output_shape,conv_params,bn_params,mult_adds");
  std::string line;
  std::string last;
  std::size_t rows = 0;
  while (std::getline(lines, line)) {
    if (!line.empty() && line[0] != '#') {
      last = line;
      ++rows;
    }
  }
  EXPECT_EQ(rows, 5u);
  EXPECT_EQ(last.substr(0, 14), "total,,1227000");
}

TEST(ExitCodes, ConfigDataAndUsageErrors) {
  TempDir dir;
  EXPECT_EQ(invoke({"count-params", "--config", (dir / "missing.cfg").string()}).code, 1);
  std::ofstream(dir / "bad.cfg") << "[conv]\nwidth = 3\n";
  EXPECT_EQ(invoke({"count-params", "--config", (dir / "bad.cfg").string()}).code, 1);
  EXPECT_EQ(invoke({"frobnicate"}).code, 1);
  EXPECT_EQ(invoke({}).code, 1);

  std::ofstream(dir / "nodata.cfg") << "[data]\npath = " << (dir / "absent").string() << "\n";
  const auto r = invoke({"train", "--config", (dir / "nodata.cfg").string(), "--out",
                         (dir / "o").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find((dir / "absent").string()), std::string::npos) << r.err;
}

TEST(ExitCodes, DivergenceIsThree) {
  Workspace ws(Overrides{{"optimizer.learning_rate", "1e38"}});
  const auto r = invoke({"train", "--config", ws.config.string()});
  EXPECT_EQ(r.code, 3) << r.err;
  EXPECT_NE(r.err.find("diverged"), std::string::npos) << r.err;
}

// ---------------------------------------------------------------------------

TEST(Train, ZeroEpochsEvaluatesTheInitialNetwork) {
  Workspace ws;
  const auto r = invoke({"train", "--config", ws.config.string(), "--epochs", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(ws.out / "final.ckpt"));
  EXPECT_EQ(load_checkpoint(ws.out / "final.ckpt").epoch, 0u);
  // Zero softmax weights predict class 0 on a balanced 10-class split.
  EXPECT_NE(r.out.find("mnist, CFSE_CwC+Sf, 90.00, 0, 0"), std::string::npos) << r.out;
  EXPECT_EQ(slurp(ws.out / "summary.txt"), r.out);
}

TEST(Train, WritesArtifactsAndIsDeterministic) {
  Workspace ws(Overrides{{"run.checkpoint_every", "1"}});
  const auto first = invoke({"train", "--config", ws.config.string(), "--seed", "4"});
  ASSERT_EQ(first.code, 0) << first.err;
  for (const char* name : {"run.cfg", "metrics.csv", "epoch_1.ckpt", "epoch_2.ckpt", "final.ckpt",
                           "final.manifest", "summary.txt"}) {
    EXPECT_TRUE(fs::exists(ws.out / name)) << name;
  }
  EXPECT_EQ(std::count(first.out.begin(), first.out.end(), '\n'), 3);
  EXPECT_NE(first.out.find(", 2, 4\n"), std::string::npos) << first.out;
  EXPECT_EQ(load_run_config(ws.out / "run.cfg").run.seed, 4u);

  auto without_seconds = [](const std::string& csv) {
    std::istringstream in(csv);
    std::string out;
    for (std::string line; std::getline(in, line);) {
      out += line.substr(0, line.rfind(',')) + '\n';
    }
    return out;
  };
  const std::string metrics = slurp(ws.out / "metrics.csv");
  EXPECT_EQ(std::count(metrics.begin(), metrics.end(), '\n'), 1 + 2 * 2);
  const auto second = invoke({"train", "--config", ws.config.string(), "--seed", "4"});
  ASSERT_EQ(second.code, 0) << second.err;
  EXPECT_EQ(second.out, first.out);
  EXPECT_EQ(without_seconds(slurp(ws.out / "metrics.csv")), without_seconds(metrics));
}

TEST(Train, WritesOnlyInsideTheOutputDirectory) {
  Workspace ws;
  std::set<fs::path> before;
  for (const auto& e : fs::recursive_directory_iterator(ws.dir.path())) {
    before.insert(e.path());
  }
  ASSERT_EQ(invoke({"train", "--config", ws.config.string(), "--epochs", "1"}).code, 0);
  for (const auto& e : fs::recursive_directory_iterator(ws.dir.path())) {
    if (!before.contains(e.path())) {
      const auto rel = fs::relative(e.path(), ws.out);
      EXPECT_FALSE(rel.empty() || *rel.begin() == "..") << e.path();
    }
  }
}

TEST(Eval, ReportsEveryStoredHead) {
  Workspace ws;
  ASSERT_EQ(invoke({"train", "--config", ws.config.string()}).code, 0);
  const auto r = invoke({"eval", "--config", ws.config.string(), "--split", "train"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("CFSE_CwC+Sf"), std::string::npos);
  EXPECT_NE(r.out.find("CFSE_CwC+Gd"), std::string::npos);
  EXPECT_NE(r.out.find("CFSE_CwC_GA"), std::string::npos);
  const auto missing = invoke({"eval", "--config", ws.config.string(), "--checkpoint",
                               (ws.dir / "none.ckpt").string()});
  EXPECT_EQ(missing.code, 2);
}

// ---------------------------------------------------------------------------

TEST(ExportFeatures, OneMapPerLayerAndClass) {
  Workspace ws;
  ASSERT_EQ(invoke({"train", "--config", ws.config.string(), "--epochs", "1"}).code, 0);
  const fs::path dir = ws.out / "maps";
  const auto r = invoke({"export-features", "--config", ws.config.string(), "--index", "3",
                         "--dir", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::size_t pgm = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".pgm") {
      ++pgm;
      const std::string bytes = slurp(e.path());
      EXPECT_EQ(bytes.substr(0, 3), "P5\n");
    }
  }
  EXPECT_EQ(pgm, 2u * 10);
  const std::string index = slurp(dir / "index.txt");
  EXPECT_NE(index.find("layer2_class9.pgm"), std::string::npos) << index;
  EXPECT_NE(index.find("dominant.layer2"), std::string::npos) << index;

  const auto bad = invoke({"export-features", "--config", ws.config.string(), "--index", "30",
                           "--dir", dir.string()});
  EXPECT_EQ(bad.code, 2);
}

TEST(FeatureExport, GrayScalingAndPgmEncoding) {
  const FeatureMap ramp{1, 3, {1.0f, 2.0f, 3.0f}};
  EXPECT_EQ(scale_to_gray(ramp), (std::vector<std::uint8_t>{0, 128, 255}));
  const FeatureMap flat{2, 1, {4.0f, 4.0f}};
  EXPECT_EQ(scale_to_gray(flat), (std::vector<std::uint8_t>{0, 0}));
  EXPECT_EQ(encode_pgm(ramp), std::string("P5\n3 1\n255\n") + std::string("\x00\x80\xff", 3));
  EXPECT_DOUBLE_EQ(ramp.mean(), 2.0);
}

TEST(FeatureExport, GridMeansMatchChannelSubsets) {
  NetworkConfig config = testing::tiny_config(4, 8);
  const Network net = build_network(config, 3);
  const Dataset d = testing::striped_dataset(1, 4, 8, 5);
  const FeatureGrid grid = feature_grid(net, d.images);
  ASSERT_EQ(grid.layers(), 2u);
  ASSERT_EQ(grid.classes(), 4u);
  const InferenceResult r = net.infer(d.images, true);
  // Layer 2 has 16 channels, 4 per class.
  const FeatureTensor& act = r.activations[1];
  for (std::size_t j = 0; j < 4; ++j) {
    double total = 0.0;
    for (std::size_t c = 4 * j; c < 4 * j + 4; ++c) {
      for (float v : act.plane(0, c)) {
        total += v;
      }
    }
    EXPECT_NEAR(grid.maps[1][j].mean(), total / (4.0 * 64), 1e-5);
  }
}

// ---------------------------------------------------------------------------

class FlatAfter : public DiscoverySession {
 public:
  FlatAfter(std::size_t layers, std::vector<std::size_t> stop) : trained_(layers), stop_(stop) {}
  std::vector<double> run_epoch(std::size_t, const std::vector<bool>& mask) override {
    std::vector<double> losses;
    for (std::size_t i = 0; i < trained_.size(); ++i) {
      trained_[i] += mask[i] ? 1 : 0;
      losses.push_back(5.0 - static_cast<double>(std::min(trained_[i], stop_[i])));
    }
    return losses;
  }

 private:
  std::vector<std::size_t> trained_;
  std::vector<std::size_t> stop_;
};

SessionFactory flat_after(std::vector<std::size_t> stop) {
  return [stop](std::size_t round) { return std::make_unique<FlatAfter>(round + 1, stop); };
}

TEST(DiscoverSchedule, WritesAParseableScheduleFile) {
  TempDir dir;
  RunConfig config = parse_run_config(
      "[conv]\nchannels = 20\ngrouped = no\n[pooling]\nmaxpool = no\n[ilt]\nplateau_epoch = 1\n");
  std::ostringstream log;
  const IltSchedule s = cmd_discover_schedule(config, flat_after({3}), dir / "s.cfg", log);
  EXPECT_EQ(s.plateau_epoch, std::vector<std::size_t>{3});
  const RunConfig written = load_run_config(dir / "s.cfg");
  EXPECT_EQ(written.network.schedule.plateau_epoch, std::vector<std::size_t>{3});
  EXPECT_EQ(written.network.layers, config.network.layers);
}

TEST(DiscoverSchedule, FastModeOverlapRule) {
  TempDir dir;
  RunConfig config = parse_run_config("[ilt]\nfast = yes\noverlap = 2\nplateau_epoch = 10, 8, 6, 4\n"
                                      "start_epoch = 0, 8, 6, 4\n");
  std::ostringstream log;
  const IltSchedule s = cmd_discover_schedule(config, flat_after({6, 4, 4, 4}), dir / "f.cfg", log);
  for (std::size_t i = 0; i + 1 < 4; ++i) {
    EXPECT_EQ(s.start_epoch[i + 1], s.plateau_epoch[i] - 2) << i;
  }
  const RunConfig written = load_run_config(dir / "f.cfg");
  EXPECT_EQ(written.network.schedule, s);
}

TEST(DiscoverSchedule, CommandLineOnSyntheticData) {
  Workspace ws(Overrides{{"ilt.max_epoch", "3"}});
  const fs::path output = ws.out / "schedule.cfg";
  const auto r = invoke({"discover-schedule", "--config", ws.config.string(), "--fast",
                         "--overlap", "1", "--output", output.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const RunConfig written = load_run_config(output);
  EXPECT_TRUE(written.network.schedule.fast_mode);
  EXPECT_EQ(written.network.schedule.overlap, 1u);
  EXPECT_NO_THROW(written.network.schedule.validate(2));
}

}  // namespace
}  // namespace cwc::cli
