#include <benchmark/benchmark.h>

#include "migan/mi_core.hpp"
#include "migan/networks.hpp"

using namespace migan;

static void BM_StatisticsNetworkEstimate(benchmark::State& state) {
  torch::set_num_threads(1);
  NetworkSpec spec{.image_size = state.range(0), .base_width = 16};
  auto critic = build_statistics_network(spec, 0);
  auto images = torch::rand({32, 3, spec.image_size, spec.image_size}) * 2 - 1;
  auto codes = sample_latent(32, spec.z_dim, 1);
  auto pos = make_positive_pairs(codes, images);
  auto neg = make_negative_pairs(codes, images, 2);
  torch::NoGradGuard no_grad;
  for (auto _ : state) {
    auto est = jsd_mi_estimate(*critic, pos, neg);
    benchmark::DoNotOptimize(est.item<double>());
  }
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_StatisticsNetworkEstimate)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

static void BM_NegativeSampling(benchmark::State& state) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(0);
  auto codes = sample_latent(state.range(0), 8, 1);
  auto images = torch::zeros({state.range(0), 3, 4, 4});
  for (auto _ : state) {
    auto neg = make_negative_pairs(codes, images, gen);
    benchmark::DoNotOptimize(neg.codes.data_ptr());
  }
}
BENCHMARK(BM_NegativeSampling)->Arg(32)->Arg(1024);

static void BM_GaussianEstimatorStep(benchmark::State& state) {
  torch::set_num_threads(1);
  auto critic = build_mlp_critic(1, 1, {64, 64}, 0);
  auto source = gaussian_pair_source({.rho = 0.6}, 256, 3);
  for (auto _ : state) {
    auto trace = train_estimator(*critic, source, {.steps = 10});
    benchmark::DoNotOptimize(trace.back());
  }
  state.SetItemsProcessed(state.iterations() * 10);
}
BENCHMARK(BM_GaussianEstimatorStep)->Unit(benchmark::kMillisecond);
