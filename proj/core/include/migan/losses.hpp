#pragma once

#include <functional>
#include <map>
#include <string>

#include <torch/torch.h>

#include "migan/mi_core.hpp"
#include "migan/networks.hpp"

namespace migan {

struct LossWeights {
  double lambda_mi = 3.0;
  double lambda_l1 = 3.0;           // paired pipeline
  double lambda_gc = 20.0;          // unpaired, shape-invariant data
  double lambda_latent_rec = 0.0;   // encoder baseline, off by default

  void validate() const;
};

using GenerateFn = std::function<torch::Tensor(const torch::Tensor& source, const torch::Tensor& codes)>;
using EncodeFn = std::function<torch::Tensor(const torch::Tensor& images)>;
using NegativeSampler = std::function<PairBatch(const torch::Tensor& codes, const torch::Tensor& images)>;

GenerateFn as_generate_fn(Generator& generator);

/// Non-saturating adversarial objective averaged over discriminator scales.
/// d_loss sees `fake` detached; g_loss keeps the graph into the generator.
struct AdversarialLosses {
  torch::Tensor d_loss;
  torch::Tensor g_loss;
};

AdversarialLosses adversarial_losses(Discriminator& discriminator, const torch::Tensor& real,
                                     const torch::Tensor& fake);
torch::Tensor discriminator_loss(Discriminator& discriminator, const torch::Tensor& real,
                                 const torch::Tensor& fake);
torch::Tensor generator_adversarial_loss(Discriminator& discriminator, const torch::Tensor& fake);

/// Mean absolute difference over all elements.
torch::Tensor l1_loss(const torch::Tensor& generated, const torch::Tensor& target);

enum class GeometricTransform { identity, rot90, vflip };

GeometricTransform parse_transform(const std::string& name);
std::string to_string(GeometricTransform transform);
/// rot90 rotates clockwise in the (H, W) plane.
torch::Tensor apply_transform(GeometricTransform transform, const torch::Tensor& images);
torch::Tensor apply_inverse_transform(GeometricTransform transform, const torch::Tensor& images);

/// mean |T(G(a, z)) - G(T(a), z)|
torch::Tensor geometry_consistency_loss(const GenerateFn& generator, const torch::Tensor& source,
                                        const torch::Tensor& codes, GeometricTransform transform);

/// mean |E(b_hat) - z|, the encoder-based diversity baseline.
torch::Tensor latent_reconstruction_loss(const EncodeFn& encoder, const torch::Tensor& generated,
                                         const torch::Tensor& codes);

/// Draws negatives with make_negative_pairs from `gen` (held by reference).
NegativeSampler resampling_negative_sampler(at::Generator& gen);

/// Generates a second batch G(source, z2) with fresh distinct codes z2 and
/// pairs it with the positive codes. Gradients flow through both batches.
/// `source` is captured by value; `gen` by reference.
NegativeSampler regenerating_negative_sampler(GenerateFn generator, torch::Tensor source,
                                              at::Generator& gen);

/// -jsd_mi_estimate over (z, b_hat) positives and sampler negatives.
/// Gradients reach both the critic and whatever produced `generated`.
torch::Tensor mi_loss(Critic& critic, const torch::Tensor& generated, const torch::Tensor& codes,
                      const NegativeSampler& sampler);
torch::Tensor mi_loss(Critic& critic, const GenerateFn& generator, const torch::Tensor& source,
                      const torch::Tensor& codes, const NegativeSampler& sampler);

/// Recognized component names: adv, l1, gc, mi, latent_rec. Missing
/// components count as zero; adv has weight one.
torch::Tensor total_loss(const LossWeights& weights,
                         const std::map<std::string, torch::Tensor>& components,
                         std::int64_t step = -1);
double total_loss(const LossWeights& weights, const std::map<std::string, double>& components,
                  std::int64_t step = -1);

}  // namespace migan
