#include "migan/losses.hpp"

#include <cmath>

#include "migan/errors.hpp"

namespace migan {

namespace F = torch::nn::functional;

namespace {

void check_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (!a.defined() || !b.defined() || a.sizes() != b.sizes()) {
    throw ArgumentError(std::string(what) + ": shape mismatch");
  }
}

double weight_for(const LossWeights& w, const std::string& name) {
  if (name == "adv") return 1.0;
  if (name == "l1") return w.lambda_l1;
  if (name == "gc") return w.lambda_gc;
  if (name == "mi") return w.lambda_mi;
  if (name == "latent_rec") return w.lambda_latent_rec;
  throw ArgumentError("unknown loss component '" + name + "'");
}

}  // namespace

void LossWeights::validate() const {
  for (double w : {lambda_mi, lambda_l1, lambda_gc, lambda_latent_rec}) {
    if (!std::isfinite(w) || w < 0.0) {
      throw ArgumentError("loss weights must be finite and non-negative");
    }
  }
}

GenerateFn as_generate_fn(Generator& generator) {
  return [&generator](const torch::Tensor& a, const torch::Tensor& z) { return generator.forward(a, z); };
}

torch::Tensor discriminator_loss(Discriminator& discriminator, const torch::Tensor& real,
                                 const torch::Tensor& fake) {
  check_same_shape(real, fake, "discriminator_loss");
  const auto real_logits = discriminator.forward(real);
  const auto fake_logits = discriminator.forward(fake.detach());
  auto loss = torch::zeros({}, real.options());
  for (std::size_t s = 0; s < real_logits.size(); ++s) {
    // -log sigma(D(real)) - log(1 - sigma(D(fake)))
    loss = loss + F::softplus(-real_logits[s]).mean() + F::softplus(fake_logits[s]).mean();
  }
  return loss / static_cast<double>(real_logits.size());
}

torch::Tensor generator_adversarial_loss(Discriminator& discriminator, const torch::Tensor& fake) {
  const auto logits = discriminator.forward(fake);
  auto loss = torch::zeros({}, fake.options());
  for (const auto& l : logits) {
    loss = loss + F::softplus(-l).mean();
  }
  return loss / static_cast<double>(logits.size());
}

AdversarialLosses adversarial_losses(Discriminator& discriminator, const torch::Tensor& real,
                                     const torch::Tensor& fake) {
  return {discriminator_loss(discriminator, real, fake),
          generator_adversarial_loss(discriminator, fake)};
}

torch::Tensor l1_loss(const torch::Tensor& generated, const torch::Tensor& target) {
  check_same_shape(generated, target, "l1_loss");
  return (generated - target).abs().mean();
}

GeometricTransform parse_transform(const std::string& name) {
  if (name == "identity") return GeometricTransform::identity;
  if (name == "rot90") return GeometricTransform::rot90;
  if (name == "vflip") return GeometricTransform::vflip;
  throw ArgumentError("unsupported geometric transform '" + name +
                      "' (expected identity, rot90 or vflip)");
}

std::string to_string(GeometricTransform transform) {
  switch (transform) {
    case GeometricTransform::identity:
      return "identity";
    case GeometricTransform::rot90:
      return "rot90";
    case GeometricTransform::vflip:
      return "vflip";
  }
  return "identity";
}

torch::Tensor apply_transform(GeometricTransform transform, const torch::Tensor& images) {
  switch (transform) {
    case GeometricTransform::identity:
      return images;
    case GeometricTransform::rot90:
      return torch::rot90(images, -1, {2, 3});
    case GeometricTransform::vflip:
      return torch::flip(images, {2});
  }
  throw ArgumentError("unsupported geometric transform");
}

torch::Tensor apply_inverse_transform(GeometricTransform transform, const torch::Tensor& images) {
  switch (transform) {
    case GeometricTransform::identity:
      return images;
    case GeometricTransform::rot90:
      return torch::rot90(images, 1, {2, 3});
    case GeometricTransform::vflip:
      return torch::flip(images, {2});
  }
  throw ArgumentError("unsupported geometric transform");
}

torch::Tensor geometry_consistency_loss(const GenerateFn& generator, const torch::Tensor& source,
                                        const torch::Tensor& codes, GeometricTransform transform) {
  if (source.dim() != 4 || source.size(2) != source.size(3)) {
    throw ArgumentError("geometry_consistency_loss expects square [B,C,H,W] images");
  }
  const auto direct = apply_transform(transform, generator(source, codes));
  const auto transformed = generator(apply_transform(transform, source), codes);
  return migan::l1_loss(direct, transformed);
}

torch::Tensor latent_reconstruction_loss(const EncodeFn& encoder, const torch::Tensor& generated,
                                         const torch::Tensor& codes) {
  const auto recovered = encoder(generated);
  if (recovered.dim() != 2 || recovered.sizes() != codes.sizes()) {
    throw ArgumentError("encoder output dimension does not match the latent code");
  }
  return (recovered - codes).abs().mean();
}

NegativeSampler resampling_negative_sampler(at::Generator& gen) {
  return [&gen](const torch::Tensor& codes, const torch::Tensor& images) {
    return make_negative_pairs(codes, images, gen);
  };
}

NegativeSampler regenerating_negative_sampler(GenerateFn generator, torch::Tensor source,
                                              at::Generator& gen) {
  return [generator = std::move(generator), source = std::move(source), &gen](
             const torch::Tensor& codes, const torch::Tensor& images) {
    if (images.size(0) != source.size(0)) {
      throw ArgumentError("negative sampler source batch does not match the positives");
    }
    auto other_codes = resample_distinct_codes(codes, gen);
    return make_cross_negative_pairs(codes, generator(source, other_codes), other_codes);
  };
}

torch::Tensor mi_loss(Critic& critic, const torch::Tensor& generated, const torch::Tensor& codes,
                      const NegativeSampler& sampler) {
  auto pos = make_positive_pairs(codes, generated);
  auto neg = sampler(codes, generated);
  return -jsd_mi_estimate(critic, pos, neg);
}

torch::Tensor mi_loss(Critic& critic, const GenerateFn& generator, const torch::Tensor& source,
                      const torch::Tensor& codes, const NegativeSampler& sampler) {
  return mi_loss(critic, generator(source, codes), codes, sampler);
}

torch::Tensor total_loss(const LossWeights& weights,
                         const std::map<std::string, torch::Tensor>& components,
                         std::int64_t step) {
  weights.validate();
  torch::Tensor total;
  for (const auto& [name, value] : components) {
    const double w = weight_for(weights, name);
    if (!value.defined()) continue;
    const double v = value.detach().item<double>();
    if (!std::isfinite(v)) {
      throw TrainingError("non-finite loss component '" + name + "'", step);
    }
    auto term = value * w;
    total = total.defined() ? total + term : term;
  }
  if (!total.defined()) return torch::zeros({});
  return total;
}

double total_loss(const LossWeights& weights, const std::map<std::string, double>& components,
                  std::int64_t step) {
  weights.validate();
  double total = 0.0;
  for (const auto& [name, value] : components) {
    const double w = weight_for(weights, name);
    if (!std::isfinite(value)) {
      throw TrainingError("non-finite loss component '" + name + "'", step);
    }
    total += w * value;
  }
  return total;
}

}  // namespace migan
