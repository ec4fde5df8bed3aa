#include <benchmark/benchmark.h>

#include <random>

#include "heightnet/loss.hpp"
#include "heightnet/metrics.hpp"
#include "heightnet/nadam.hpp"
#include "heightnet/network.hpp"
#include "heightnet/ops.hpp"

using namespace heightnet;

namespace {

Tensor4<float> noise(Shape4 s, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> d(-1.f, 1.f);
  Tensor4<float> t(s);
  for (auto& v : t.values()) v = d(rng);
  return t;
}

KernelBank<float> kernels(std::size_t co, std::size_t ci) {
  KernelBank<float> k(co, ci, 3, 3);
  k.weights = noise(k.weights.shape(), 7);
  return k;
}

}  // namespace

static void BM_Conv2dForward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto hw = static_cast<std::size_t>(state.range(1));
  const auto x = noise(Shape4{1, c, hw, hw}, 1);
  const auto k = kernels(c, c);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, k, 1, 1));
  state.counters["flops"] = benchmark::Counter(2.0 * 9 * c * c * hw * hw, benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_Conv2dForward)->Args({8, 64})->Args({32, 64})->Args({64, 128});

static void BM_Conv2dBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto hw = static_cast<std::size_t>(state.range(1));
  const auto x = noise(Shape4{1, c, hw, hw}, 1);
  const auto k = kernels(c, c);
  const auto g = noise(Shape4{1, c, hw, hw}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_backward(x, k, g, 1, 1));
}
BENCHMARK(BM_Conv2dBackward)->Args({8, 64})->Args({32, 64})->Args({64, 128});

static void BM_MaxPool(benchmark::State& state) {
  const auto x = noise(Shape4{1, 64, 128, 128}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(max_pool_2x2(x));
}
BENCHMARK(BM_MaxPool);

static void BM_NetworkTrainStep(benchmark::State& state) {
  auto net = Network<float>::build(preset_config(state.range(0) == 0 ? "tiny" : "desk"));
  const auto x = noise(Shape4{1, 3, 64, 64}, 4);
  auto y = noise(Shape4{1, 1, 64, 64}, 5);
  OptimizerState opt;
  for (auto _ : state) {
    net.zero_grad();
    auto fwd = net.forward(x, Mode::train);
    const auto loss = l1_loss(fwd.height, y);
    net.backward(fwd.cache, loss.grad);
    nadam_step(net.parameters(), opt);
  }
}
BENCHMARK(BM_NetworkTrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

static void BM_Ssim(benchmark::State& state) {
  const auto a = noise(Shape4{1, 1, 256, 256}, 6).cast<double>();
  const auto b = noise(Shape4{1, 1, 256, 256}, 7).cast<double>();
  for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
}
BENCHMARK(BM_Ssim)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
