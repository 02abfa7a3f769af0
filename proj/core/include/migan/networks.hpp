#pragma once

// Generator, discriminator, statistics network and encoder builders.
//
// Image tensors are NCHW float in [-1, 1]. The latent code enters a conv
// network as a spatially replicated [B, z_dim, H, W] map concatenated on the
// channel axis.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "migan/mi_core.hpp"

namespace migan {

enum class Architecture {
  conv,  // U-net / patch discriminators / Table-style statistics network
  mlp,   // fully-connected variants for 1x1 "point" datasets
};

std::string to_string(Architecture arch);
Architecture parse_architecture(const std::string& name);

struct NetworkSpec {
  std::int64_t image_size = 32;
  std::int64_t image_channels = 3;
  std::int64_t z_dim = 8;
  std::int64_t base_width = 32;
  std::int64_t n_discriminator_scales = 2;
  Architecture arch = Architecture::conv;
  std::int64_t mlp_hidden = 128;

  /// Throws ArgumentError for non-power-of-two or too-small conv sizes.
  void validate() const;
  /// log2(image_size) - 2 stride-2 convolutions bring the map down to 4x4.
  std::int64_t conv_depth() const;
  /// base_width doubling per layer, capped at 512.
  std::vector<std::int64_t> channel_schedule() const;
  /// Flattened image size C*H*W.
  std::int64_t image_features() const;

  bool operator==(const NetworkSpec&) const = default;
};

class Generator : public torch::nn::Module {
 public:
  /// (a [B,C,H,W], z [B,z_dim]) -> b_hat [B,C,H,W] in [-1,1].
  virtual torch::Tensor forward(const torch::Tensor& source, const torch::Tensor& codes) = 0;
};

class Discriminator : public torch::nn::Module {
 public:
  /// One logit map per scale; scale k sees the input downsampled 2^k times.
  virtual std::vector<torch::Tensor> forward(const torch::Tensor& images) = 0;
};

class Encoder : public torch::nn::Module {
 public:
  /// [B,C,H,W] -> [B,z_dim]
  virtual torch::Tensor forward(const torch::Tensor& images) = 0;
};

/// Replicates [B, z] to [B, z, height, width].
torch::Tensor replicate_code(const torch::Tensor& codes, std::int64_t height, std::int64_t width);

/// U-net with the code concatenated at the input and at the bottleneck.
class UnetGenerator : public Generator {
 public:
  explicit UnetGenerator(const NetworkSpec& spec);
  torch::Tensor forward(const torch::Tensor& source, const torch::Tensor& codes) override;

 private:
  NetworkSpec spec_;
  std::vector<torch::nn::Conv2d> down_;
  torch::nn::Conv2d bottleneck_{nullptr};
  std::vector<torch::nn::ConvTranspose2d> up_;
};

class MlpGenerator : public Generator {
 public:
  explicit MlpGenerator(const NetworkSpec& spec);
  torch::Tensor forward(const torch::Tensor& source, const torch::Tensor& codes) override;

 private:
  NetworkSpec spec_;
  torch::nn::Sequential body_{nullptr};
};

/// Stack of patch discriminators over an average-pool pyramid.
class MultiScaleDiscriminator : public Discriminator {
 public:
  explicit MultiScaleDiscriminator(const NetworkSpec& spec);
  std::vector<torch::Tensor> forward(const torch::Tensor& images) override;

 private:
  std::vector<torch::nn::Sequential> scales_;
};

class MlpDiscriminator : public Discriminator {
 public:
  explicit MlpDiscriminator(const NetworkSpec& spec);
  std::vector<torch::Tensor> forward(const torch::Tensor& images) override;

 private:
  torch::nn::Sequential body_{nullptr};
};

/// Convolutional statistics network.
///
/// Every 4x4 stride-2 convolution sees its input concatenated with the
/// replicated code, and the flattened 4x4 features are concatenated with the
/// code again before FC(512) -> ELU -> FC(1). At image_size 256 with
/// base_width 32 the channel schedule is 32, 64, 128, 256, 512, 512.
class StatisticsNetwork : public Critic {
 public:
  explicit StatisticsNetwork(const NetworkSpec& spec);
  torch::Tensor forward(const torch::Tensor& codes, const torch::Tensor& images) override;

  std::vector<std::int64_t> conv_input_channels() const;
  std::vector<std::int64_t> conv_output_channels() const;
  std::int64_t fc_input_features() const;
  std::int64_t fc_hidden_features() const { return kHidden; }

  static constexpr std::int64_t kHidden = 512;

 private:
  NetworkSpec spec_;
  std::vector<torch::nn::Conv2d> convs_;
  torch::nn::Linear fc1_{nullptr};
  torch::nn::Linear fc2_{nullptr};
};

/// Fully-connected critic on concat(z, flatten(b)), ELU hidden layers.
class MlpCritic : public Critic {
 public:
  MlpCritic(std::int64_t code_dim, std::int64_t image_features, std::vector<std::int64_t> hidden);
  torch::Tensor forward(const torch::Tensor& codes, const torch::Tensor& images) override;

 private:
  torch::nn::Sequential body_{nullptr};
};

class ConvEncoder : public Encoder {
 public:
  explicit ConvEncoder(const NetworkSpec& spec);
  torch::Tensor forward(const torch::Tensor& images) override;

 private:
  torch::nn::Sequential features_{nullptr};
  torch::nn::Linear head_{nullptr};
};

class MlpEncoder : public Encoder {
 public:
  explicit MlpEncoder(const NetworkSpec& spec);
  torch::Tensor forward(const torch::Tensor& images) override;

 private:
  torch::nn::Sequential body_{nullptr};
};

// Builders pick the conv or mlp variant from spec.arch and initialize
// parameters from `seed` (conv weights N(0, 0.02), biases zero, critic output
// layer zero).
std::shared_ptr<Generator> build_generator(const NetworkSpec& spec, std::uint64_t seed);
std::shared_ptr<Discriminator> build_discriminator(const NetworkSpec& spec, std::uint64_t seed);
std::shared_ptr<Critic> build_statistics_network(const NetworkSpec& spec, std::uint64_t seed);
std::shared_ptr<Encoder> build_encoder(const NetworkSpec& spec, std::uint64_t seed);
std::shared_ptr<MlpCritic> build_mlp_critic(std::int64_t code_dim, std::int64_t image_features,
                                            std::vector<std::int64_t> hidden, std::uint64_t seed);

/// Total number of learnable scalars.
std::int64_t parameter_count(const torch::nn::Module& module);

}  // namespace migan
