// Throughput of the training hot paths at MNIST-sized CFSE shapes.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "cwc/conv.hpp"
#include "cwc/goodness.hpp"
#include "cwc/network.hpp"
#include "cwc/predictors.hpp"

namespace cwc {
namespace {

template <typename T>
BasicTensor<T> uniform(Shape4 shape, std::uint64_t seed, T lo = T{-1}, T hi = T{1}) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<T> dist(lo, hi);
  BasicTensor<T> t(shape);
  for (T& v : t.data()) {
    v = dist(rng);
  }
  return t;
}

std::vector<ClassIndex> cycling_targets(std::size_t n) {
  std::vector<ClassIndex> t(n);
  for (std::size_t i = 0; i < n; ++i) {
    t[i] = static_cast<ClassIndex>(i % 10);
  }
  return t;
}

// Args: batch, c_in, c_out, side, grouped.
ConvWeights<float> weights_for(const benchmark::State& state) {
  const auto c_in = static_cast<std::size_t>(state.range(1));
  const auto c_out = static_cast<std::size_t>(state.range(2));
  const std::size_t groups = state.range(4) != 0 ? 10 : 1;
  return {uniform<float>(Shape4{c_out, c_in / groups, 3, 3}, 2), std::vector<float>(c_out), groups};
}

FeatureTensor input_for(const benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(3));
  return uniform<float>(Shape4{static_cast<std::size_t>(state.range(0)),
                               static_cast<std::size_t>(state.range(1)), side, side},
                        1);
}

void conv_args(benchmark::internal::Benchmark* b) {
  b->ArgNames({"batch", "cin", "cout", "side", "grouped"});
  b->Args({32, 1, 20, 28, 0});
  b->Args({32, 20, 80, 28, 1});
  b->Args({32, 80, 240, 14, 0});
  b->Args({32, 240, 480, 14, 1});
  b->Unit(benchmark::kMillisecond);
}

void BM_ConvForward(benchmark::State& state) {
  const FeatureTensor x = input_for(state);
  const ConvWeights<float> w = weights_for(state);
  for (auto _ : state) {
    benchmark::DoNotOptimize(conv2d_forward(x, w, ConvGeometry{}));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ConvForward)->Apply(conv_args);

void BM_ConvBackward(benchmark::State& state) {
  const FeatureTensor x = input_for(state);
  const ConvWeights<float> w = weights_for(state);
  const FeatureTensor grad = uniform<float>(conv2d_forward(x, w, ConvGeometry{}).shape(), 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(conv2d_backward(x, w, grad, ConvGeometry{}));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ConvBackward)->Apply(conv_args);

void BM_LocalLoss(benchmark::State& state) {
  const auto kind = static_cast<LossKind>(state.range(0));
  const FeatureTensor y = uniform<float>(Shape4{128, 80, 28, 28}, 4, 0.0f, 1.0f);
  const auto targets = cycling_targets(128);
  for (auto _ : state) {
    benchmark::DoNotOptimize(local_loss<float>(kind, y, targets, 2.0f, 10));
  }
  state.SetLabel(std::string(to_string(kind)));
  state.SetItemsProcessed(state.iterations() * 128);
}
BENCHMARK(BM_LocalLoss)
    ->Arg(static_cast<int>(LossKind::CwC))
    ->Arg(static_cast<int>(LossKind::PvN))
    ->Unit(benchmark::kMillisecond);

void BM_TrainBatch(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  Network net = build_network(NetworkConfig::cfse(InputShape{1, 28, 28}), 0);
  const FeatureTensor x = uniform<float>(Shape4{batch, 1, 28, 28}, 5);
  const auto targets = cycling_targets(batch);
  const BatchPlan plan{std::vector<bool>(4, true), std::vector<bool>(4, true)};
  for (auto _ : state) {
    benchmark::DoNotOptimize(net.train_batch(x, targets, plan));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TrainBatch)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_GoodnessHeadStep(benchmark::State& state) {
  const NetworkConfig config = NetworkConfig::cfse(InputShape{1, 28, 28});
  GoodnessHead head(config.flattened_features(), 10, config.goodness_head, config.optimizer, 0);
  const FeatureTensor features = uniform<float>(config.stage_shapes().back(), 6);
  const FeatureTensor batch = uniform<float>(
      Shape4{128, features.c(), features.h(), features.w()}, 6);
  const auto targets = cycling_targets(128);
  for (auto _ : state) {
    benchmark::DoNotOptimize(head.train_step(batch, targets));
  }
  state.SetItemsProcessed(state.iterations() * 128);
}
BENCHMARK(BM_GoodnessHeadStep)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace cwc

BENCHMARK_MAIN();
