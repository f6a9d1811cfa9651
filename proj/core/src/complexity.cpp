#include "cwc/complexity.hpp"

namespace cwc {

std::size_t ComplexityReport::total_parameters() const {
  std::size_t total = softmax_head_parameters + goodness_head_parameters;
  for (const auto& layer : layers) {
    total += layer.conv_parameters + layer.batchnorm_parameters;
  }
  return total;
}

std::uint64_t ComplexityReport::total_mult_adds() const {
  std::uint64_t total = softmax_head_mult_adds + goodness_head_mult_adds;
  for (const auto& layer : layers) {
    total += layer.mult_adds;
  }
  return total;
}

ComplexityReport count_complexity(const NetworkConfig& config) {
  config.validate();
  ComplexityReport report;
  const std::vector<Shape4> stages = config.stage_shapes();

  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    const LayerSpec& spec = config.layers[i];
    const std::size_t c_in = stages[i].c;
    const std::size_t groups = config.groups(i);
    const std::size_t fan_in = (c_in / groups) * spec.kernel * spec.kernel;
    const Shape4 conv_out = conv_output_shape(stages[i], spec.out_channels, spec.kernel,
                                              spec.geometry());

    LayerComplexity layer;
    layer.name = std::string(spec.grouped ? "GroupConv" : "Conv") + std::to_string(i + 1);
    layer.output = stages[i + 1];
    layer.conv_parameters = fan_in * spec.out_channels + spec.out_channels;
    layer.batchnorm_parameters = 2 * spec.out_channels;
    layer.mult_adds = static_cast<std::uint64_t>(conv_out.plane()) * spec.out_channels * fan_in;
    report.layers.push_back(layer);
  }

  const std::size_t flatten = stages.back().sample_size();
  if (config.uses(PredictorKind::Softmax)) {
    report.softmax_head_parameters = flatten * config.classes + config.classes;
    report.softmax_head_mult_adds = static_cast<std::uint64_t>(flatten) * config.classes;
  }
  if (config.uses(PredictorKind::Goodness)) {
    const std::size_t hidden = config.goodness_head.hidden;
    const std::size_t first = (flatten + config.classes) * hidden + hidden;
    const std::size_t second = hidden * hidden + hidden;
    report.goodness_head_parameters = first + second;
    report.goodness_head_mult_adds =
        static_cast<std::uint64_t>(flatten + config.classes) * hidden +
        static_cast<std::uint64_t>(hidden) * hidden;
  }
  return report;
}

std::size_t count_parameters(const NetworkConfig& config) {
  return count_complexity(config).total_parameters();
}

std::uint64_t count_mult_adds(const NetworkConfig& config) {
  return count_complexity(config).total_mult_adds();
}

}  // namespace cwc
