#include "cwc/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <utility>
#include <vector>

#include "cwc/errors.hpp"

namespace cwc {

namespace {

constexpr std::array<char, 8> kMagic{'C', 'W', 'C', 'C', 'K', 'P', 'T', '\0'};
constexpr std::array<char, 4> kTrailer{'E', 'N', 'D', '\0'};

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
      bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
  }
  void size(std::size_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void floats(std::span<const float> values) {
    size(values.size());
    for (float v : values) {
      f32(v);
    }
  }
  template <std::size_t N>
  void tag(const std::array<char, N>& t) {
    for (char c : t) {
      bytes_.push_back(static_cast<std::uint8_t>(c));
    }
  }
  void adam(const AdamState& state) {
    f32(state.config.learning_rate);
    f32(state.config.beta1);
    f32(state.config.beta2);
    f32(state.config.epsilon);
    u64(state.steps);
    size(state.first.size());
    for (std::size_t i = 0; i < state.first.size(); ++i) {
      floats(state.first[i]);
      floats(state.second[i]);
    }
  }
  [[nodiscard]] const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  Reader(std::vector<std::uint8_t> bytes, std::string origin)
      : bytes_(std::move(bytes)), origin_(std::move(origin)) {}

  std::uint8_t u8() { return take(1)[0]; }
  std::uint32_t u32() {
    const std::uint8_t* p = take(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) {
      v = (v << 8) | p[i];
    }
    return v;
  }
  std::uint64_t u64() {
    const std::uint8_t* p = take(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) {
      v = (v << 8) | p[i];
    }
    return v;
  }
  std::size_t size() {
    const std::uint64_t v = u64();
    if (v > bytes_.size()) {
      fail("implausible length " + std::to_string(v));
    }
    return static_cast<std::size_t>(v);
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::vector<float> floats() {
    std::vector<float> out(size());
    for (float& v : out) {
      v = f32();
    }
    return out;
  }
  void floats_into(std::span<float> out, const char* what) {
    const std::vector<float> values = floats();
    if (values.size() != out.size()) {
      fail(std::string(what) + " holds " + std::to_string(values.size()) + " values, expected " +
           std::to_string(out.size()));
    }
    std::copy(values.begin(), values.end(), out.begin());
  }
  template <std::size_t N>
  void expect(const std::array<char, N>& t, const char* what) {
    const std::uint8_t* p = take(N);
    if (std::memcmp(p, t.data(), N) != 0) {
      fail(std::string("bad ") + what);
    }
  }
  AdamState adam() {
    AdamState state;
    state.config.learning_rate = f32();
    state.config.beta1 = f32();
    state.config.beta2 = f32();
    state.config.epsilon = f32();
    state.steps = u64();
    const std::size_t slots = size();
    for (std::size_t i = 0; i < slots; ++i) {
      state.first.push_back(floats());
      state.second.push_back(floats());
      if (state.first.back().size() != state.second.back().size()) {
        fail("Adam moment sizes differ");
      }
    }
    return state;
  }
  [[nodiscard]] bool done() const { return cursor_ == bytes_.size(); }
  [[noreturn]] void fail(const std::string& message) const {
    throw DataError(origin_ + ": " + message);
  }

 private:
  const std::uint8_t* take(std::size_t n) {
    if (bytes_.size() - cursor_ < n) {
      fail("truncated checkpoint");
    }
    const std::uint8_t* p = bytes_.data() + cursor_;
    cursor_ += n;
    return p;
  }

  std::vector<std::uint8_t> bytes_;
  std::string origin_;
  std::size_t cursor_ = 0;
};

void check_adam_shape(const Reader& in, const AdamState& loaded, const AdamState& expected,
                      const std::string& owner) {
  bool ok = loaded.first.size() == expected.first.size();
  for (std::size_t i = 0; ok && i < loaded.first.size(); ++i) {
    ok = loaded.first[i].size() == expected.first[i].size();
  }
  if (!ok) {
    in.fail(owner + ": Adam state does not match the parameter shapes");
  }
}

void write_config(Writer& out, const NetworkConfig& config) {
  out.size(config.input.channels);
  out.size(config.input.height);
  out.size(config.input.width);
  out.size(config.classes);
  out.size(config.batch_size);
  out.f32(config.optimizer.learning_rate);
  out.f32(config.optimizer.beta1);
  out.f32(config.optimizer.beta2);
  out.f32(config.optimizer.epsilon);
  out.size(config.goodness_head.hidden);
  out.f32(config.goodness_head.theta);
  out.size(config.predictors.size());
  for (PredictorKind kind : config.predictors) {
    out.u8(static_cast<std::uint8_t>(kind));
  }
  out.size(config.layers.size());
  for (const LayerSpec& spec : config.layers) {
    out.size(spec.out_channels);
    out.u8(spec.grouped ? 1 : 0);
    out.size(spec.kernel);
    out.size(spec.stride);
    out.size(spec.padding);
    out.u8(spec.maxpool_after ? 1 : 0);
    out.u8(static_cast<std::uint8_t>(spec.loss));
    out.f32(spec.theta);
  }
  const IltSchedule& s = config.schedule;
  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    out.size(s.start_epoch[i]);
    out.size(s.plateau_epoch[i]);
  }
  out.size(s.max_epoch);
  out.size(s.overlap);
  out.u8(s.fast_mode ? 1 : 0);
}

NetworkConfig read_config(Reader& in) {
  NetworkConfig config;
  config.input.channels = in.size();
  config.input.height = in.size();
  config.input.width = in.size();
  config.classes = in.size();
  config.batch_size = in.size();
  config.optimizer.learning_rate = in.f32();
  config.optimizer.beta1 = in.f32();
  config.optimizer.beta2 = in.f32();
  config.optimizer.epsilon = in.f32();
  config.goodness_head.hidden = in.size();
  config.goodness_head.theta = in.f32();
  config.predictors.resize(in.size());
  for (PredictorKind& kind : config.predictors) {
    const std::uint8_t v = in.u8();
    if (v > static_cast<std::uint8_t>(PredictorKind::GlobalAveraging)) {
      in.fail("unknown predictor tag " + std::to_string(v));
    }
    kind = static_cast<PredictorKind>(v);
  }
  config.layers.resize(in.size());
  for (LayerSpec& spec : config.layers) {
    spec.out_channels = in.size();
    spec.grouped = in.u8() != 0;
    spec.kernel = in.size();
    spec.stride = in.size();
    spec.padding = in.size();
    spec.maxpool_after = in.u8() != 0;
    const std::uint8_t loss = in.u8();
    if (loss > static_cast<std::uint8_t>(LossKind::PvN)) {
      in.fail("unknown loss tag " + std::to_string(loss));
    }
    spec.loss = static_cast<LossKind>(loss);
    spec.theta = in.f32();
  }
  IltSchedule& s = config.schedule;
  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    s.start_epoch.push_back(in.size());
    s.plateau_epoch.push_back(in.size());
  }
  s.max_epoch = in.size();
  s.overlap = in.size();
  s.fast_mode = in.u8() != 0;
  return config;
}

void write_dense(Writer& out, const DenseParams<float>& params) {
  out.size(static_cast<std::size_t>(params.weights.rows()));
  out.size(static_cast<std::size_t>(params.weights.cols()));
  out.floats({params.weights.data(), static_cast<std::size_t>(params.weights.size())});
  out.floats({params.bias.data(), static_cast<std::size_t>(params.bias.size())});
}

void read_dense(Reader& in, DenseParams<float>& params, const char* what) {
  const std::size_t rows = in.size();
  const std::size_t cols = in.size();
  if (rows != static_cast<std::size_t>(params.weights.rows()) ||
      cols != static_cast<std::size_t>(params.weights.cols())) {
    in.fail(std::string(what) + " is " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  in.floats_into({params.weights.data(), static_cast<std::size_t>(params.weights.size())}, what);
  in.floats_into({params.bias.data(), static_cast<std::size_t>(params.bias.size())}, what);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Network& network,
                     const PredictorHeads& heads, const ChannelStats& stats, std::size_t epoch) {
  Writer out;
  out.tag(kMagic);
  out.u32(kCheckpointVersion);
  out.size(epoch);
  write_config(out, network.config());

  for (std::size_t i = 0; i < network.layer_count(); ++i) {
    const TrainedLayer& layer = network.layer(i);
    const Shape4& k = layer.weights.kernels.shape();
    out.size(k.n);
    out.size(k.c);
    out.size(k.h);
    out.size(k.w);
    out.size(layer.weights.groups);
    out.size(layer.epochs_trained);
    out.u8(layer.frozen ? 1 : 0);
    out.floats(layer.weights.kernels.data());
    out.floats(layer.weights.bias);
    out.floats(layer.bn.running_mean);
    out.floats(layer.bn.running_var);
    out.floats(layer.bn.gamma);
    out.floats(layer.bn.beta);
    out.f32(layer.bn.momentum);
    out.f32(layer.bn.epsilon);
    out.adam(layer.adam);
  }

  out.floats(stats.mean);
  out.floats(stats.stddev);

  out.u8(heads.softmax ? 1 : 0);
  if (heads.softmax) {
    const SoftmaxHead& head = *heads.softmax;
    out.size(head.classes());
    out.size(head.features());
    out.floats({head.weights().data(), static_cast<std::size_t>(head.weights().size())});
    out.floats({head.bias().data(), static_cast<std::size_t>(head.bias().size())});
    out.adam(head.adam());
  }
  out.u8(heads.goodness ? 1 : 0);
  if (heads.goodness) {
    const GoodnessHead& head = *heads.goodness;
    for (std::size_t l = 0; l < 2; ++l) {
      write_dense(out, head.layers()[l]);
      out.adam(head.adam()[l]);
    }
  }
  out.u8(heads.global_averaging ? 1 : 0);
  out.tag(kTrailer);

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) {
    throw DataError("cannot write checkpoint " + path.string());
  }
  const auto& bytes = out.bytes();
  file.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
  if (!file) {
    throw DataError("failed writing checkpoint " + path.string());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) {
    throw DataError("cannot open checkpoint " + path.string());
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(file)),
                                  std::istreambuf_iterator<char>());
  Reader in(std::move(bytes), path.string());
  in.expect(kMagic, "magic");
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion) {
    in.fail("unsupported checkpoint version " + std::to_string(version));
  }
  const std::size_t epoch = in.size();
  NetworkConfig config = read_config(in);
  try {
    config.validate();
  } catch (const ConfigError& e) {
    in.fail(std::string("invalid stored configuration: ") + e.what());
  }

  Network network(config, 0);
  for (std::size_t i = 0; i < network.layer_count(); ++i) {
    TrainedLayer& layer = network.layer(i);
    const std::string owner = "layer " + std::to_string(i + 1);
    Shape4 k;
    k.n = in.size();
    k.c = in.size();
    k.h = in.size();
    k.w = in.size();
    const std::size_t groups = in.size();
    if (!(k == layer.weights.kernels.shape()) || groups != layer.weights.groups) {
      in.fail(owner + ": kernel header " + k.to_string() + " does not match the stored spec");
    }
    layer.epochs_trained = in.size();
    layer.frozen = in.u8() != 0;
    in.floats_into(layer.weights.kernels.data(), "kernels");
    in.floats_into(layer.weights.bias, "bias");
    in.floats_into(layer.bn.running_mean, "running mean");
    in.floats_into(layer.bn.running_var, "running variance");
    in.floats_into(layer.bn.gamma, "gamma");
    in.floats_into(layer.bn.beta, "beta");
    layer.bn.momentum = in.f32();
    layer.bn.epsilon = in.f32();
    AdamState adam = in.adam();
    check_adam_shape(in, adam, layer.adam, owner);
    layer.adam = std::move(adam);
  }

  ChannelStats stats;
  stats.mean = in.floats();
  stats.stddev = in.floats();
  if (stats.mean.size() != stats.stddev.size()) {
    in.fail("normalization statistics differ in length");
  }

  PredictorHeads heads = PredictorHeads::for_config(config, 0);
  const bool has_softmax = in.u8() != 0;
  if (has_softmax != heads.softmax.has_value()) {
    in.fail("softmax head presence does not match the stored predictors");
  }
  if (has_softmax) {
    SoftmaxHead& head = *heads.softmax;
    const std::size_t classes = in.size();
    const std::size_t features = in.size();
    if (classes != head.classes() || features != head.features()) {
      in.fail("softmax head shape does not match the stored network");
    }
    in.floats_into({head.weights().data(), static_cast<std::size_t>(head.weights().size())},
                   "softmax weights");
    in.floats_into({head.bias().data(), static_cast<std::size_t>(head.bias().size())},
                   "softmax bias");
    AdamState adam = in.adam();
    check_adam_shape(in, adam, head.adam(), "softmax head");
    head.adam() = std::move(adam);
  }
  const bool has_goodness = in.u8() != 0;
  if (has_goodness != heads.goodness.has_value()) {
    in.fail("goodness head presence does not match the stored predictors");
  }
  if (has_goodness) {
    GoodnessHead& head = *heads.goodness;
    for (std::size_t l = 0; l < 2; ++l) {
      read_dense(in, head.layers()[l], "goodness head layer");
      AdamState adam = in.adam();
      check_adam_shape(in, adam, head.adam()[l], "goodness head");
      head.adam()[l] = std::move(adam);
    }
  }
  heads.global_averaging = in.u8() != 0;
  in.expect(kTrailer, "trailer");
  if (!in.done()) {
    in.fail("trailing bytes after checkpoint");
  }
  return Checkpoint{std::move(network), std::move(heads), std::move(stats), epoch};
}

std::string checkpoint_manifest(const Network& network, std::size_t epoch) {
  const NetworkConfig& config = network.config();
  std::ostringstream out;
  out << "format = cwc-checkpoint\n"
      << "version = " << kCheckpointVersion << '\n'
      << "epoch = " << epoch << '\n'
      << "input = " << config.input.channels << 'x' << config.input.height << 'x'
      << config.input.width << '\n'
      << "classes = " << config.classes << '\n'
      << "predictors =";
  for (PredictorKind kind : config.predictors) {
    out << ' ' << to_string(kind);
  }
  out << '\n';
  for (std::size_t i = 0; i < network.layer_count(); ++i) {
    const TrainedLayer& layer = network.layer(i);
    const LayerSpec& spec = layer.spec;
    out << "\n[layer." << i + 1 << "]\n"
        << "out_channels = " << spec.out_channels << '\n'
        << "grouped = " << (spec.grouped ? "yes" : "no") << '\n'
        << "kernel = " << spec.kernel << '\n'
        << "stride = " << spec.stride << '\n'
        << "padding = " << spec.padding << '\n'
        << "maxpool = " << (spec.maxpool_after ? "yes" : "no") << '\n'
        << "loss = " << to_string(spec.loss) << '\n'
        << "start_epoch = " << config.schedule.start_epoch[i] << '\n'
        << "plateau_epoch = " << config.schedule.plateau_epoch[i] << '\n'
        << "epochs_trained = " << layer.epochs_trained << '\n'
        << "frozen = " << (layer.frozen ? "yes" : "no") << '\n';
  }
  return out.str();
}

void write_manifest(const std::filesystem::path& path, const Network& network, std::size_t epoch) {
  std::ofstream file(path, std::ios::trunc);
  if (!file) {
    throw DataError("cannot write manifest " + path.string());
  }
  file << checkpoint_manifest(network, epoch);
}

}  // namespace cwc
