#include "cwc/cli/run_config.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <utility>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "cwc/errors.hpp"

namespace cwc::cli {

namespace pt = boost::property_tree;

namespace {

struct Key {
  const char* section;
  const char* name;
};

constexpr std::array kSchema{
    Key{"data", "dataset"},          Key{"data", "path"},
    Key{"data", "train_limit"},      Key{"data", "test_limit"},
    Key{"conv", "channels"},         Key{"conv", "grouped"},
    Key{"conv", "kernel_size"},      Key{"conv", "stride"},
    Key{"conv", "padding"},          Key{"pooling", "maxpool"},
    Key{"loss", "type"},             Key{"loss", "threshold"},
    Key{"optimizer", "method"},      Key{"optimizer", "learning_rate"},
    Key{"optimizer", "beta1"},       Key{"optimizer", "beta2"},
    Key{"optimizer", "epsilon"},     Key{"optimizer", "batch_size"},
    Key{"ilt", "start_epoch"},       Key{"ilt", "plateau_epoch"},
    Key{"ilt", "max_epoch"},         Key{"ilt", "fast"},
    Key{"ilt", "overlap"},           Key{"ilt", "plateau_window"},
    Key{"ilt", "plateau_epsilon"},   Key{"predictor", "heads"},
    Key{"predictor", "goodness_hidden"}, Key{"predictor", "goodness_threshold"},
    Key{"run", "seed"},              Key{"run", "epochs"},
    Key{"run", "out"},               Key{"run", "checkpoint_every"},
};

bool known_section(const std::string& section) {
  return std::any_of(kSchema.begin(), kSchema.end(),
                     [&](const Key& k) { return section == k.section; });
}

bool known_key(const std::string& section, const std::string& name) {
  return std::any_of(kSchema.begin(), kSchema.end(), [&](const Key& k) {
    return section == k.section && name == k.name;
  });
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) {
    return {};
  }
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> items;
  std::stringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    items.push_back(trim(item));
  }
  if (!value.empty() && value.back() == ',') {
    items.emplace_back();
  }
  return items;
}

class Reader {
 public:
  Reader(const pt::ptree& tree, std::string origin) : tree_(tree), origin_(std::move(origin)) {}

  [[nodiscard]] std::optional<std::string> get(const char* section, const char* key) const {
    const auto sec = tree_.get_child_optional(section);
    if (!sec) {
      return std::nullopt;
    }
    const auto value = sec->get_optional<std::string>(pt::ptree::path_type(key, '\0'));
    if (!value) {
      return std::nullopt;
    }
    return trim(*value);
  }

  [[noreturn]] void fail(const char* section, const char* key, const std::string& what) const {
    throw ConfigError(origin_ + ": [" + section + "] " + key + ": " + what);
  }

  template <typename T>
  T number(const std::string& text, const char* section, const char* key) const {
    T value{};
    const char* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end || text.empty()) {
      fail(section, key, "'" + text + "' is not a valid number");
    }
    return value;
  }

  bool boolean(const std::string& text, const char* section, const char* key) const {
    const std::string v = lower(text);
    if (v == "yes" || v == "true" || v == "1") {
      return true;
    }
    if (v == "no" || v == "false" || v == "0") {
      return false;
    }
    fail(section, key, "'" + text + "' is not yes/no");
  }

  template <typename T>
  void scalar(const char* section, const char* key, T& out) const {
    if (auto v = get(section, key)) {
      out = number<T>(*v, section, key);
    }
  }

  void flag(const char* section, const char* key, bool& out) const {
    if (auto v = get(section, key)) {
      out = boolean(*v, section, key);
    }
  }

  template <typename T>
  std::optional<std::vector<T>> numbers(const char* section, const char* key) const {
    auto v = get(section, key);
    if (!v) {
      return std::nullopt;
    }
    std::vector<T> out;
    for (const std::string& item : split_list(*v)) {
      out.push_back(number<T>(item, section, key));
    }
    return out;
  }

  std::optional<std::vector<bool>> flags(const char* section, const char* key) const {
    auto v = get(section, key);
    if (!v) {
      return std::nullopt;
    }
    std::vector<bool> out;
    for (const std::string& item : split_list(*v)) {
      out.push_back(boolean(item, section, key));
    }
    return out;
  }

 private:
  const pt::ptree& tree_;
  std::string origin_;
};

pt::ptree read_tree(std::string_view text, const std::string& origin) {
  pt::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(origin + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  for (const auto& [section, child] : tree) {
    if (child.empty()) {
      throw ConfigError(origin + ": key '" + section + "' outside any section");
    }
    if (!known_section(section)) {
      throw ConfigError(origin + ": unknown section [" + section + "]");
    }
    for (const auto& entry : child) {
      if (!known_key(section, entry.first)) {
        throw ConfigError(origin + ": unknown key '" + entry.first + "' in [" + section + "]");
      }
    }
  }
  return tree;
}

LossKind parse_loss(const std::string& text, const Reader& in) {
  const std::string v = lower(text);
  if (v == "cwc") {
    return LossKind::CwC;
  }
  if (v == "pvn") {
    return LossKind::PvN;
  }
  in.fail("loss", "type", "'" + text + "' is not cwc or pvn");
}

PredictorKind parse_predictor(const std::string& text, const Reader& in) {
  const std::string v = lower(text);
  if (v == "softmax" || v == "sf") {
    return PredictorKind::Softmax;
  }
  if (v == "goodness" || v == "gd") {
    return PredictorKind::Goodness;
  }
  if (v == "ga") {
    return PredictorKind::GlobalAveraging;
  }
  in.fail("predictor", "heads", "'" + text + "' is not softmax, goodness or ga");
}

template <typename T>
void check_length(const std::vector<T>& values, std::size_t layers, const char* section,
                  const char* key, const Reader& in) {
  if (values.size() != layers) {
    in.fail(section, key,
            "lists " + std::to_string(values.size()) + " entries for " +
                std::to_string(layers) + " layers");
  }
}

RunConfig build(const pt::ptree& tree, const std::string& origin) {
  const Reader in(tree, origin);
  RunConfig config;

  if (auto v = in.get("data", "dataset")) {
    try {
      config.data.kind = parse_dataset_kind(lower(*v));
    } catch (const ConfigError& e) {
      in.fail("data", "dataset", e.what());
    }
  }
  if (auto v = in.get("data", "path")) {
    config.data.path = *v;
  }
  in.scalar("data", "train_limit", config.data.train_limit);
  in.scalar("data", "test_limit", config.data.test_limit);

  LossKind loss = LossKind::CwC;
  if (auto v = in.get("loss", "type")) {
    loss = parse_loss(*v, in);
  }
  NetworkConfig& net = config.network;
  net = NetworkConfig::cfse(input_shape_for(config.data.kind), 10, loss);

  if (auto channels = in.numbers<std::size_t>("conv", "channels")) {
    const std::size_t layers = channels->size();
    net.layers.assign(layers, net.layers.front());
    for (std::size_t i = 0; i < layers; ++i) {
      net.layers[i].out_channels = (*channels)[i];
      net.layers[i].grouped = false;
      net.layers[i].maxpool_after = false;
    }
    net.schedule = IltSchedule::from_plateaus(std::vector<std::size_t>(layers, 1));
    if (!in.get("conv", "grouped") || !in.get("pooling", "maxpool") ||
        !in.get("ilt", "plateau_epoch")) {
      in.fail("conv", "channels", "a custom layer list also needs [conv] grouped, "
                                  "[pooling] maxpool and [ilt] plateau_epoch");
    }
  }
  const std::size_t layers = net.layers.size();
  if (auto grouped = in.flags("conv", "grouped")) {
    check_length(*grouped, layers, "conv", "grouped", in);
    for (std::size_t i = 0; i < layers; ++i) {
      net.layers[i].grouped = (*grouped)[i];
    }
  }
  if (auto pool = in.flags("pooling", "maxpool")) {
    check_length(*pool, layers, "pooling", "maxpool", in);
    for (std::size_t i = 0; i < layers; ++i) {
      net.layers[i].maxpool_after = (*pool)[i];
    }
  }
  std::size_t kernel = net.layers.front().kernel;
  std::size_t stride = net.layers.front().stride;
  std::size_t padding = net.layers.front().padding;
  float threshold = net.layers.front().theta;
  in.scalar("conv", "kernel_size", kernel);
  in.scalar("conv", "stride", stride);
  in.scalar("conv", "padding", padding);
  in.scalar("loss", "threshold", threshold);
  for (LayerSpec& spec : net.layers) {
    spec.kernel = kernel;
    spec.stride = stride;
    spec.padding = padding;
    spec.loss = loss;
    spec.theta = threshold;
  }

  if (auto v = in.get("optimizer", "method"); v && lower(*v) != "adam") {
    in.fail("optimizer", "method", "only adam is supported, got '" + *v + "'");
  }
  in.scalar("optimizer", "learning_rate", net.optimizer.learning_rate);
  in.scalar("optimizer", "beta1", net.optimizer.beta1);
  in.scalar("optimizer", "beta2", net.optimizer.beta2);
  in.scalar("optimizer", "epsilon", net.optimizer.epsilon);
  in.scalar("optimizer", "batch_size", net.batch_size);

  IltSchedule& schedule = net.schedule;
  if (auto plateaus = in.numbers<std::size_t>("ilt", "plateau_epoch")) {
    check_length(*plateaus, layers, "ilt", "plateau_epoch", in);
    schedule = IltSchedule::from_plateaus(*plateaus);
  }
  if (auto starts = in.numbers<std::size_t>("ilt", "start_epoch")) {
    check_length(*starts, layers, "ilt", "start_epoch", in);
    schedule.start_epoch = *starts;
  }
  schedule.max_epoch = std::max<std::size_t>(schedule.max_epoch, 50);
  in.scalar("ilt", "max_epoch", schedule.max_epoch);
  in.flag("ilt", "fast", schedule.fast_mode);
  in.scalar("ilt", "overlap", schedule.overlap);
  in.scalar("ilt", "plateau_window", config.discovery.detector.window);
  in.scalar("ilt", "plateau_epsilon", config.discovery.detector.min_delta);

  if (auto v = in.get("predictor", "heads")) {
    net.predictors.clear();
    for (const std::string& item : split_list(*v)) {
      const PredictorKind kind = parse_predictor(item, in);
      if (std::find(net.predictors.begin(), net.predictors.end(), kind) != net.predictors.end()) {
        in.fail("predictor", "heads", "'" + item + "' listed twice");
      }
      net.predictors.push_back(kind);
    }
  }
  in.scalar("predictor", "goodness_hidden", net.goodness_head.hidden);
  in.scalar("predictor", "goodness_threshold", net.goodness_head.theta);

  in.scalar("run", "seed", config.run.seed);
  if (auto v = in.get("run", "epochs"); v && lower(*v) != "auto") {
    config.run.epochs = in.number<std::size_t>(*v, "run", "epochs");
  }
  if (auto v = in.get("run", "out")) {
    config.run.out = *v;
  }
  in.scalar("run", "checkpoint_every", config.run.checkpoint_every);

  try {
    net.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  if (config.discovery.detector.window == 0) {
    in.fail("ilt", "plateau_window", "must be positive");
  }
  return config;
}

template <typename T>
std::string format_number(T value) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), ptr);
}

template <typename T, typename F>
std::string join(const std::vector<T>& values, F&& format) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out += (i ? ", " : "") + format(values[i]);
  }
  return out;
}

}  // namespace

InputShape input_shape_for(DatasetKind kind) {
  if (kind == DatasetKind::Cifar10) {
    return {3, 32, 32};
  }
  return {1, 28, 28};
}

RunConfig parse_with_env(std::string_view text, std::string_view origin, const EnvLookup& env) {
  const std::string where(origin);
  pt::ptree tree = read_tree(text, where);
  if (env) {
    for (const Key& key : kSchema) {
      if (auto value = env(env_name(key.section, key.name))) {
        tree.put_child(pt::ptree::path_type(std::string(key.section) + '\x1f' + key.name, '\x1f'),
                       pt::ptree(*value));
      }
    }
  }
  return build(tree, where);
}

RunConfig parse_run_config(std::string_view text, std::string_view origin) {
  return parse_with_env(text, origin, {});
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream file(path);
  if (!file) {
    throw ConfigError("cannot read config file " + path.string());
  }
  std::stringstream text;
  text << file.rdbuf();
  return parse_with_env(text.str(), path.string(), process_env);
}

std::string env_name(std::string_view section, std::string_view key) {
  std::string name = "CWC_";
  for (char c : section) {
    name += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  name += '_';
  for (char c : key) {
    name += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  return name;
}

std::optional<std::string> process_env(const std::string& name) {
  if (const char* value = std::getenv(name.c_str())) {
    return std::string(value);
  }
  return std::nullopt;
}

std::string serialize_run_config(const RunConfig& config) {
  const NetworkConfig& net = config.network;
  const LayerSpec& first = net.layers.front();
  auto yes_no = [](bool v) { return std::string(v ? "yes" : "no"); };
  auto size = [](std::size_t v) { return format_number(v); };
  std::vector<std::size_t> channels;
  std::vector<bool> grouped;
  std::vector<bool> pooled;
  for (const LayerSpec& spec : net.layers) {
    channels.push_back(spec.out_channels);
    grouped.push_back(spec.grouped);
    pooled.push_back(spec.maxpool_after);
  }
  std::vector<std::string> heads;
  for (PredictorKind kind : net.predictors) {
    heads.emplace_back(to_string(kind));
  }

  std::ostringstream out;
  out << "[data]\n"
      << "dataset = " << to_string(config.data.kind) << '\n'
      << "path = " << config.data.path.string() << '\n'
      << "train_limit = " << config.data.train_limit << '\n'
      << "test_limit = " << config.data.test_limit << '\n'
      << "\n[conv]\n"
      << "channels = " << join(channels, size) << '\n'
      << "grouped = " << join(grouped, yes_no) << '\n'
      << "kernel_size = " << first.kernel << '\n'
      << "stride = " << first.stride << '\n'
      << "padding = " << first.padding << '\n'
      << "\n[pooling]\n"
      << "maxpool = " << join(pooled, yes_no) << '\n'
      << "\n[loss]\n"
      << "type = " << to_string(first.loss) << '\n'
      << "threshold = " << format_number(first.theta) << '\n'
      << "\n[optimizer]\n"
      << "method = adam\n"
      << "learning_rate = " << format_number(net.optimizer.learning_rate) << '\n'
      << "beta1 = " << format_number(net.optimizer.beta1) << '\n'
      << "beta2 = " << format_number(net.optimizer.beta2) << '\n'
      << "epsilon = " << format_number(net.optimizer.epsilon) << '\n'
      << "batch_size = " << net.batch_size << '\n'
      << "\n[ilt]\n"
      << "start_epoch = " << join(net.schedule.start_epoch, size) << '\n'
      << "plateau_epoch = " << join(net.schedule.plateau_epoch, size) << '\n'
      << "max_epoch = " << net.schedule.max_epoch << '\n'
      << "fast = " << yes_no(net.schedule.fast_mode) << '\n'
      << "overlap = " << net.schedule.overlap << '\n'
      << "plateau_window = " << config.discovery.detector.window << '\n'
      << "plateau_epsilon = " << format_number(config.discovery.detector.min_delta) << '\n'
      << "\n[predictor]\n"
      << "heads = " << join(heads, [](const std::string& s) { return s; }) << '\n'
      << "goodness_hidden = " << net.goodness_head.hidden << '\n'
      << "goodness_threshold = " << format_number(net.goodness_head.theta) << '\n'
      << "\n[run]\n"
      << "seed = " << config.run.seed << '\n'
      << "epochs = " << (config.run.epochs ? format_number(*config.run.epochs) : "auto") << '\n'
      << "out = " << config.run.out.string() << '\n'
      << "checkpoint_every = " << config.run.checkpoint_every << '\n';
  return out.str();
}

std::string model_label(const NetworkConfig& network, PredictorKind predictor) {
  const bool grouped = std::any_of(network.layers.begin(), network.layers.end(),
                                   [](const LayerSpec& s) { return s.grouped; });
  std::string label = grouped ? "CFSE" : "FF-CNN";
  label += network.layers.front().loss == LossKind::CwC ? "_CwC" : "_PvN";
  switch (predictor) {
    case PredictorKind::Softmax:
      return label + "+Sf";
    case PredictorKind::Goodness:
      return label + "+Gd";
    case PredictorKind::GlobalAveraging:
      return label + "_GA";
  }
  return label;
}

}  // namespace cwc::cli
