#include <benchmark/benchmark.h>

#include "abda/autograd.hpp"
#include "abda/flowcore.hpp"
#include "abda/rng.hpp"

namespace {

using namespace abda;

Tensor rnd(std::vector<int> shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

void BM_BilinearWarp(benchmark::State& state) {
  int n = static_cast<int>(state.range(0));
  Tensor img = rnd({1, n, n}, 1);
  Tensor flow = rnd({2, n, n}, 2);
  for (auto _ : state)
    benchmark::DoNotOptimize(flowcore::warp(img, flow));
}
BENCHMARK(BM_BilinearWarp)->Arg(64)->Arg(128);

void BM_CostVolume(benchmark::State& state) {
  int n = static_cast<int>(state.range(0));
  Tensor f = rnd({flowcore::kFeatChannels, n, n}, 3);
  Tensor g = rnd({flowcore::kFeatChannels, n, n}, 4);
  for (auto _ : state)
    benchmark::DoNotOptimize(flowcore::cost_volume(f, g, flowcore::kRadius));
}
BENCHMARK(BM_CostVolume)->Arg(16)->Arg(32);

void BM_Conv2dForwardBackward(benchmark::State& state) {
  int n = static_cast<int>(state.range(0));
  auto x = ad::leaf(rnd({8, n, n}, 5));
  auto w = ad::leaf(rnd({16, 8, 3, 3}, 6));
  auto b = ad::leaf(rnd({16}, 7));
  for (auto _ : state) {
    x->zero_grad();
    w->zero_grad();
    b->zero_grad();
    auto loss = ad::mean(ad::square(ad::conv2d(x, w, b, 1, 1)));
    ad::backward(loss);
    benchmark::DoNotOptimize(loss->val.item());
  }
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(32)->Arg(64);

void BM_FlowForward(benchmark::State& state) {
  int n = static_cast<int>(state.range(0));
  flowcore::FlowNet net(1, 9);
  auto a = ad::constant(rnd({1, n, n}, 10));
  auto b = ad::constant(rnd({1, n, n}, 11));
  net.params().set_requires_grad(false);
  for (auto _ : state)
    benchmark::DoNotOptimize(net.forward(a, b)->val.sum());
}
BENCHMARK(BM_FlowForward)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
