#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "migan/data.hpp"
#include "migan/losses.hpp"
#include "migan/networks.hpp"

namespace migan {

struct TrainConfig {
  DatasetMode mode = DatasetMode::paired;
  std::int64_t batch_size = 32;
  std::int64_t steps = 3000;
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  LossWeights weights;
  NetworkSpec spec;
  std::uint64_t seed = 0;
  std::int64_t checkpoint_every = 1000;  // 0 disables periodic checkpoints
  std::int64_t log_every = 100;          // console progress; 0 silences it
  std::int64_t sample_every = 1000;      // sample grids; 0 disables them
  GeometricTransform gc_transform = GeometricTransform::rot90;

  /// batch_size >= 2, steps >= 1, valid spec and weights.
  void validate() const;
};

/// Everything needed to continue a run bit-for-bit.
struct TrainState {
  NetworkSpec spec;
  std::shared_ptr<Generator> generator;
  std::shared_ptr<Discriminator> discriminator;
  std::shared_ptr<Critic> critic;
  std::shared_ptr<Encoder> encoder;  // only when lambda_latent_rec > 0

  std::unique_ptr<torch::optim::Adam> generator_opt;
  std::unique_ptr<torch::optim::Adam> discriminator_opt;
  std::unique_ptr<torch::optim::Adam> critic_opt;
  std::unique_ptr<torch::optim::Adam> encoder_opt;

  std::int64_t step = 0;
  at::Generator rng;  // latent codes and negative resampling
  IteratorState data_state;
};

/// Fresh networks and optimizers; parameter seeds derive from config.seed.
TrainState make_train_state(const TrainConfig& config);

struct StepResult {
  std::int64_t step = 0;
  double d_loss = 0.0;
  double g_loss = 0.0;  // adversarial generator term
  double l1 = 0.0;
  double gc = 0.0;
  double mi = 0.0;  // mi_loss = -estimate
  double latent_rec = 0.0;
  double total = 0.0;
  double mi_estimate = 0.0;
};

/// One discriminator update, then one joint generator + statistics-network
/// update on the total loss. The statistics network always ascends the
/// unweighted estimate so that it keeps measuring MI when lambda_mi = 0; the
/// generator sees lambda_mi times the same evaluation.
StepResult train_step(TrainState& state, const Batch& batch, const TrainConfig& config);

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: keep everything in memory only
  std::optional<std::filesystem::path> resume_from;
  std::string checkpoint_metadata;  // stored verbatim in checkpoint headers
  std::function<void(const StepResult&)> on_step;
};

struct TrainResult {
  TrainState state;
  std::vector<StepResult> trace;
};

/// Runs train_step until config.steps, reshuffling epochs from the seed.
/// With an out_dir: losses.csv, mi_trace.csv, step{N}_grid.png and
/// checkpoints/step{N}.ckpt plus checkpoints/final.ckpt.
TrainResult train(const TrainConfig& config, const Dataset& dataset, const TrainOptions& options = {});

/// G(a_i, z_j) for every input i and code j: [N_inputs, N_codes, C, H, W].
/// Each image is generated on its own so results do not depend on the grid.
torch::Tensor sample(TrainState& state, const torch::Tensor& inputs, const torch::Tensor& codes);

/// G(a, (1-t) z1 + t z2) for n evenly spaced t in [0, 1]: [n, C, H, W].
torch::Tensor interpolate(TrainState& state, const torch::Tensor& input, const torch::Tensor& z1,
                          const torch::Tensor& z2, std::int64_t n);

/// Batched, gradient-free generation for metrics.
GenerateFn inference_fn(TrainState& state);

/// Hue-style disentanglement statistic over a sample() grid: mean over codes
/// of the within-column variance of the per-image chroma vector, and the
/// variance of the column means.
struct ColumnVariance {
  double within = 0.0;
  double across = 0.0;
};
ColumnVariance column_style_variance(const torch::Tensor& grid, const torch::Tensor& masks);

// --- checkpoints -----------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const TrainState& state,
                     const TrainConfig& config, const std::string& metadata = "");

struct LoadedCheckpoint {
  TrainConfig config;
  std::string metadata;
  TrainState state;
};

/// Throws CheckpointError on unreadable files or when `expected` is given and
/// its network spec differs from the stored one.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 const std::optional<NetworkSpec>& expected = std::nullopt);

std::string spec_to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const std::string& text);

}  // namespace migan
