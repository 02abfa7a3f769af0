#include <benchmark/benchmark.h>

#include "migan/data.hpp"
#include "migan/metrics.hpp"

using namespace migan;

static void BM_FrechetDistance(benchmark::State& state) {
  const auto dim = state.range(0);
  auto a = torch::randn({2000, dim}, torch::kFloat64);
  auto b = torch::randn({2000, dim}, torch::kFloat64) + 0.5;
  for (auto _ : state) benchmark::DoNotOptimize(frechet_distance(a, b));
}
BENCHMARK(BM_FrechetDistance)->Arg(16)->Arg(118)->Unit(benchmark::kMillisecond);

static void BM_FitBins(benchmark::State& state) {
  torch::set_num_threads(1);
  auto targets = make_shapes_colors({.n_shapes = 1000}, 0).target;
  for (auto _ : state) {
    auto bins = fit_bins(targets, state.range(0), 0);
    benchmark::DoNotOptimize(bins.iterations);
  }
}
BENCHMARK(BM_FitBins)->Arg(20)->Arg(50)->Unit(benchmark::kMillisecond)->Iterations(3);

static void BM_RandomConvEmbed(benchmark::State& state) {
  torch::set_num_threads(1);
  RandomConvEmbedder embedder(3, 0);
  auto images = torch::rand({256, 3, 32, 32}) * 2 - 1;
  for (auto _ : state) benchmark::DoNotOptimize(embedder.embed(images).data_ptr());
  state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_RandomConvEmbed)->Unit(benchmark::kMillisecond);
