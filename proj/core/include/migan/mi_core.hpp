#pragma once

// Jensen-Shannon mutual-information estimation between latent codes and the
// images generated from them, plus Gaussian oracles with known MI.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <utility>
#include <vector>

#include <torch/torch.h>

namespace migan {

enum class Polarity { positive, negative };

/// A batch of (code, image) pairs.
///
/// `codes` is [B, z_dim]; `images` is [B, C, H, W]. For positive batches
/// images[i] was generated from codes[i]; for negative batches it was not.
/// Scalar oracle samples are stored as 1x1 images with one channel per
/// dimension so that every estimator shares one code path.
struct PairBatch {
  torch::Tensor codes;
  torch::Tensor images;
  Polarity polarity = Polarity::positive;

  std::int64_t size() const { return codes.size(0); }
};

/// Statistics network T(z, b): one logit per (code, image) pair.
class Critic : public torch::nn::Module {
 public:
  /// `codes` is [B, z_dim] (or a spatially constant [B, z_dim, H, W] map),
  /// `images` is [B, C, H, W]; returns [B] logits.
  virtual torch::Tensor forward(const torch::Tensor& codes, const torch::Tensor& images) = 0;
};

/// i.i.d. N(0, I) codes, [batch, z_dim]. Deterministic given the seed.
torch::Tensor sample_latent(std::int64_t batch, std::int64_t z_dim, std::uint64_t seed);
torch::Tensor sample_latent(std::int64_t batch, std::int64_t z_dim, at::Generator& gen);

/// Wraps an aligned (codes, images) batch as positives after shape checks.
PairBatch make_positive_pairs(torch::Tensor codes, torch::Tensor images);

/// Pairs every image with a freshly drawn code instead of its generating one.
///
/// The negative batch has the same size as the positive batch and never
/// contains a code that equals the generating code of its image; any exact
/// collision is redrawn. Images are shared, not copied.
PairBatch make_negative_pairs(const torch::Tensor& codes, const torch::Tensor& images,
                              std::uint64_t seed);
PairBatch make_negative_pairs(const torch::Tensor& codes, const torch::Tensor& images,
                              at::Generator& gen);

/// Fresh N(0, I) codes with no row equal to the matching row of `codes`.
torch::Tensor resample_distinct_codes(const torch::Tensor& codes, at::Generator& gen);

/// Negatives from a second generated batch: pairs `codes` (which generated
/// the positives) with `other_images`, generated from `other_codes`. Throws
/// ArgumentError if any other_codes row equals its codes row.
PairBatch make_cross_negative_pairs(const torch::Tensor& codes, const torch::Tensor& other_images,
                                    const torch::Tensor& other_codes);

/// mean log sigma(pos) + mean log(1 - sigma(neg)), evaluated through softplus
/// so that saturated logits never produce -inf. Always <= 0.
torch::Tensor jsd_bound_from_logits(const torch::Tensor& pos_logits, const torch::Tensor& neg_logits);

/// Jensen-Shannon lower bound evaluated by `critic` on the two batches.
/// Differentiable with respect to the critic and to anything upstream of the
/// batch tensors.
torch::Tensor jsd_mi_estimate(Critic& critic, const PairBatch& pos, const PairBatch& neg);

/// Donsker-Varadhan bound mean(T_pos) - log mean exp(T_neg). Benchmark only.
torch::Tensor dv_bound_from_logits(const torch::Tensor& pos_logits, const torch::Tensor& neg_logits);
torch::Tensor dv_mi_estimate(Critic& critic, const PairBatch& pos, const PairBatch& neg);

enum class EstimatorObjective { jsd, dv };

using PairSource = std::function<std::pair<PairBatch, PairBatch>()>;

struct EstimatorTrainOptions {
  std::int64_t steps = 2000;
  double lr = 1e-3;
  double beta1 = 0.5;
  double beta2 = 0.999;
  EstimatorObjective objective = EstimatorObjective::jsd;
};

/// Gradient ascent on the chosen bound with respect to the critic only.
/// Returns the per-step estimate trace. Throws TrainingError on a non-finite
/// estimate.
std::vector<double> train_estimator(Critic& critic, const PairSource& source,
                                    const EstimatorTrainOptions& options);

/// Bivariate (per-dimension) Gaussian with correlation rho.
struct GaussianOracleSpec {
  double rho = 0.0;
  std::int64_t dim = 1;

  void validate() const;
  /// -dim/2 * log(1 - rho^2) nats.
  double analytic_mi() const;
};

/// y = rho x + sqrt(1 - rho^2) eps. Positives pair x with its y; negatives
/// pair x with an independent y'.
std::pair<PairBatch, PairBatch> gaussian_pairs(const GaussianOracleSpec& spec, std::int64_t batch,
                                               at::Generator& gen);
std::pair<PairBatch, PairBatch> gaussian_pairs(const GaussianOracleSpec& spec, std::int64_t batch,
                                               std::uint64_t seed);

/// Stateful source yielding a fresh Gaussian batch per call.
PairSource gaussian_pair_source(const GaussianOracleSpec& spec, std::int64_t batch,
                                std::uint64_t seed);

struct TracePoint {
  std::int64_t step = 0;
  double estimate = 0.0;
};

void write_trace_csv(const std::filesystem::path& path, const std::vector<TracePoint>& trace);
std::vector<TracePoint> read_trace_csv(const std::filesystem::path& path);

}  // namespace migan
