#pragma once

// Generative-model evaluation: Frechet distance over embedder features,
// k-means bin statistics (NDB and bin JSD), and pairwise diversity.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "migan/losses.hpp"

namespace migan {

/// Deterministic image -> feature-vector map.
class Embedder {
 public:
  virtual ~Embedder() = default;
  /// [N,C,H,W] -> [N, feature_dim] float64.
  virtual torch::Tensor embed(const torch::Tensor& images) const = 0;
  virtual std::int64_t feature_dim() const = 0;
  virtual std::string tag() const = 0;
};

/// Raw pixels as features.
class FlattenEmbedder : public Embedder {
 public:
  explicit FlattenEmbedder(std::int64_t feature_dim) : dim_(feature_dim) {}
  torch::Tensor embed(const torch::Tensor& images) const override;
  std::int64_t feature_dim() const override { return dim_; }
  std::string tag() const override { return "flatten"; }

 private:
  std::int64_t dim_;
};

/// Fixed random-weight conv stack (3x3 convs, ReLU, 2x pooling); features are
/// the spatial means of every stage concatenated with the pixel means, so
/// both color and structure move the embedding. A stand-in for a pretrained
/// extractor: distances are comparable only within one tag.
class RandomConvEmbedder : public Embedder {
 public:
  RandomConvEmbedder(std::int64_t in_channels, std::uint64_t seed,
                     std::vector<std::int64_t> widths = {16, 32, 64});
  torch::Tensor embed(const torch::Tensor& images) const override;
  std::int64_t feature_dim() const override;
  std::string tag() const override;

 private:
  std::int64_t in_channels_;
  std::uint64_t seed_;
  std::vector<torch::Tensor> weights_;
  std::vector<torch::Tensor> biases_;
};

/// Picks RandomConvEmbedder for images larger than 1x1 and FlattenEmbedder otherwise.
std::unique_ptr<Embedder> default_embedder(std::int64_t channels, std::int64_t image_size,
                                           std::uint64_t seed);

/// ||mu1 - mu2||^2 + tr(S1 + S2 - 2 (S1 S2)^1/2) between Gaussian fits of
/// [N, F] feature sets, in float64. `eps` is added to both diagonals.
double frechet_distance(const torch::Tensor& features_a, const torch::Tensor& features_b,
                        double eps = 1e-6);
double fid_proxy(const Embedder& embedder, const torch::Tensor& real, const torch::Tensor& generated);

struct BinModel {
  std::int64_t k = 0;
  torch::Tensor centroids;                  // [K, D] float32, flattened pixels
  std::vector<std::int64_t> train_counts;   // per bin
  std::int64_t train_size = 0;
  std::int64_t iterations = 0;

  /// Nearest-centroid index per sample, [N] int64.
  torch::Tensor assign(const torch::Tensor& samples) const;
};

/// Minimum training samples per bin.
inline constexpr std::int64_t kMinSamplesPerBin = 10;

/// k-means on flattened pixels with k-means++ seeding and at most
/// `max_iterations` Lloyd steps. Requires >= 10 samples per requested bin;
/// bins that end up below 10 members are re-seeded by splitting the largest
/// bin.
BinModel fit_bins(const torch::Tensor& train, std::int64_t k, std::uint64_t seed,
                  std::int64_t max_iterations = 300);

struct NdbResult {
  std::int64_t ndb = 0;
  double jsd = 0.0;
  double alpha = 0.05;
  std::vector<bool> significant;
  std::vector<double> train_proportions;
  std::vector<double> generated_proportions;
};

/// Pooled two-proportion z-test per bin at level alpha, plus the
/// Jensen-Shannon divergence (nats) between bin histograms with 1e-12
/// smoothing.
NdbResult ndb_jsd(const BinModel& bins, const torch::Tensor& generated, double alpha = 0.05);
/// Same statistics from raw counts.
NdbResult ndb_jsd_from_counts(const std::vector<std::int64_t>& train_counts,
                              const std::vector<std::int64_t>& generated_counts, double alpha);
double categorical_jsd(const std::vector<double>& p, const std::vector<double>& q, double eps = 1e-12);

struct DiversityOptions {
  std::int64_t n_inputs = 100;
  std::int64_t pairs_per_input = 19;
  std::uint64_t seed = 0;
  std::int64_t z_dim = 8;
};

struct DiversityResult {
  double value = 0.0;
  std::int64_t n_inputs = 0;
  std::int64_t pairs_per_input = 0;
  std::int64_t n_pairs = 0;
  std::vector<std::string> warnings;
};

/// Mean embedder distance between two translations of the same input under
/// independent codes. Codes for each input derive from (seed, input content),
/// so the score does not depend on input order.
DiversityResult diversity_lpips_proxy(const Embedder& embedder, const GenerateFn& model,
                                      const torch::Tensor& inputs, const DiversityOptions& options);

struct SamplingOptions {
  std::int64_t n_inputs = 100;
  std::int64_t codes_per_input = 50;
  std::uint64_t seed = 0;
  std::int64_t z_dim = 8;
};

struct SampleSet {
  torch::Tensor samples;       // [n_inputs * codes_per_input, C, H, W]
  torch::Tensor input_index;   // index into test_inputs per sample
  std::int64_t n_inputs = 0;
  std::int64_t codes_per_input = 0;
  std::vector<std::string> warnings;
};

/// n_inputs test images (chosen with the seed when more are available), each
/// translated with codes_per_input fresh codes.
SampleSet fid_sampling_protocol(const GenerateFn& model, const torch::Tensor& test_inputs,
                                const SamplingOptions& options);

struct MetricProtocol {
  std::map<std::string, std::int64_t> counts;
  std::vector<std::uint64_t> seeds;
  std::optional<std::int64_t> k;
  std::optional<double> alpha;
};

struct MetricReport {
  std::string metric;
  double value = 0.0;
  MetricProtocol protocol;
  std::string embedder_tag;
};

/// {metric, value, protocol: {counts, seeds, K, alpha}, embedder_tag}
std::string to_json(const std::vector<MetricReport>& reports, int indent = 2);
std::vector<MetricReport> reports_from_json(const std::string& text);

}  // namespace migan
