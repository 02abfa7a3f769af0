#include <benchmark/benchmark.h>

#include "migan/training.hpp"

using namespace migan;

static void BM_TrainStep(benchmark::State& state) {
  torch::set_num_threads(1);
  TrainConfig config;
  config.spec.base_width = state.range(0);
  auto ds = make_shapes_colors({.n_shapes = 64}, 0);
  auto train_state = make_train_state(config);
  BatchIterator batches(ds, config.batch_size, 0);
  for (auto _ : state) {
    auto r = train_step(train_state, batches.next(), config);
    benchmark::DoNotOptimize(r.total);
  }
}
BENCHMARK(BM_TrainStep)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond)->Iterations(10);

static void BM_PointTrainStep(benchmark::State& state) {
  torch::set_num_threads(1);
  TrainConfig config;
  config.batch_size = 64;
  config.spec = {.image_size = 1, .image_channels = 2, .z_dim = 2, .arch = Architecture::mlp};
  auto ds = make_cond_gmm({}, 0);
  auto train_state = make_train_state(config);
  BatchIterator batches(ds, config.batch_size, 0);
  for (auto _ : state) {
    auto r = train_step(train_state, batches.next(), config);
    benchmark::DoNotOptimize(r.total);
  }
}
BENCHMARK(BM_PointTrainStep)->Unit(benchmark::kMillisecond);
