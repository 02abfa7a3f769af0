#include "migan/networks.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "migan/errors.hpp"

namespace migan {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace {

constexpr std::int64_t kMaxChannels = 512;
constexpr double kLeakySlope = 0.2;

nn::Conv2d conv4x4_s2(std::int64_t in, std::int64_t out) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, 4).stride(2).padding(1));
}

nn::ConvTranspose2d deconv4x4_s2(std::int64_t in, std::int64_t out) {
  return nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in, out, 4).stride(2).padding(1));
}

// Parameter initialization with an explicit generator so that builders are
// deterministic without touching the global torch seed.
void init_parameters(nn::Module& root, std::uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  torch::NoGradGuard no_grad;
  for (auto& module : root.modules(/*include_self=*/true)) {
    if (auto* conv = module->as<nn::Conv2d>()) {
      conv->weight.normal_(0.0, 0.02, gen);
      if (conv->bias.defined()) conv->bias.zero_();
    } else if (auto* deconv = module->as<nn::ConvTranspose2d>()) {
      deconv->weight.normal_(0.0, 0.02, gen);
      if (deconv->bias.defined()) deconv->bias.zero_();
    } else if (auto* linear = module->as<nn::Linear>()) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(linear->weight.size(1)));
      linear->weight.uniform_(-bound, bound, gen);
      if (linear->bias.defined()) linear->bias.zero_();
    }
  }
}

// Critics start as the constant-zero function.
void zero_output_layer(nn::Module& root) {
  nn::LinearImpl* last = nullptr;
  for (auto& module : root.modules(/*include_self=*/false)) {
    if (auto* linear = module->as<nn::Linear>()) last = linear;
  }
  if (last == nullptr) return;
  torch::NoGradGuard no_grad;
  last->weight.zero_();
  if (last->bias.defined()) last->bias.zero_();
}

torch::Tensor flatten_images(const torch::Tensor& images) {
  return images.reshape({images.size(0), -1});
}

// Accepts [B, z] or a spatially constant [B, z, H, W] code map and returns a
// map matching the requested spatial size.
torch::Tensor code_map_like(const torch::Tensor& codes, std::int64_t h, std::int64_t w) {
  if (codes.dim() == 2) return replicate_code(codes, h, w);
  if (codes.dim() == 4) {
    if (codes.size(2) == h && codes.size(3) == w) return codes;
    return F::adaptive_avg_pool2d(codes, F::AdaptiveAvgPool2dFuncOptions({h, w}));
  }
  throw ArgumentError("codes must be [B, z] or [B, z, H, W]");
}

torch::Tensor code_vector(const torch::Tensor& codes) {
  if (codes.dim() == 2) return codes;
  if (codes.dim() == 4) return codes.mean({2, 3});
  throw ArgumentError("codes must be [B, z] or [B, z, H, W]");
}

}  // namespace

std::string to_string(Architecture arch) {
  switch (arch) {
    case Architecture::conv:
      return "conv";
    case Architecture::mlp:
      return "mlp";
  }
  return "conv";
}

Architecture parse_architecture(const std::string& name) {
  if (name == "conv") return Architecture::conv;
  if (name == "mlp") return Architecture::mlp;
  throw ArgumentError("unknown architecture '" + name + "' (expected conv or mlp)");
}

void NetworkSpec::validate() const {
  if (image_channels < 1 || z_dim < 1 || base_width < 1 || mlp_hidden < 1) {
    throw ArgumentError("network spec requires positive channels, z_dim and widths");
  }
  if (n_discriminator_scales < 1) {
    throw ArgumentError("network spec requires at least one discriminator scale");
  }
  if (arch == Architecture::mlp) {
    if (image_size < 1) throw ArgumentError("image_size must be positive");
    return;
  }
  if (image_size < 16 || !std::has_single_bit(static_cast<std::uint64_t>(image_size))) {
    throw ArgumentError("image_size must be a power of two >= 16, got " +
                        std::to_string(image_size));
  }
  // each patch discriminator needs at least 8 px after its pyramid level
  if ((image_size >> (n_discriminator_scales - 1)) < 8) {
    throw ArgumentError("too many discriminator scales for image_size " +
                        std::to_string(image_size));
  }
}

std::int64_t NetworkSpec::conv_depth() const {
  return static_cast<std::int64_t>(std::bit_width(static_cast<std::uint64_t>(image_size))) - 1 - 2;
}

std::vector<std::int64_t> NetworkSpec::channel_schedule() const {
  std::vector<std::int64_t> channels;
  std::int64_t width = base_width;
  for (std::int64_t i = 0; i < conv_depth(); ++i) {
    channels.push_back(std::min(width, kMaxChannels));
    width *= 2;
  }
  return channels;
}

std::int64_t NetworkSpec::image_features() const {
  return image_channels * image_size * image_size;
}

torch::Tensor replicate_code(const torch::Tensor& codes, std::int64_t height, std::int64_t width) {
  if (codes.dim() != 2) {
    throw ArgumentError("replicate_code expects [B, z]");
  }
  return codes.view({codes.size(0), codes.size(1), 1, 1}).expand({-1, -1, height, width});
}

// --- generators -------------------------------------------------------------

namespace {

// per-sample, per-channel; no affine parameters and no running statistics
torch::Tensor instance_norm(const torch::Tensor& x) {
  return F::instance_norm(x, F::InstanceNormFuncOptions().eps(1e-5));
}

}  // namespace

UnetGenerator::UnetGenerator(const NetworkSpec& spec) : spec_(spec) {
  spec_.validate();
  const auto channels = spec_.channel_schedule();
  const auto depth = static_cast<std::size_t>(spec_.conv_depth());
  const auto z = spec_.z_dim;

  for (std::size_t i = 0; i < depth; ++i) {
    const auto in = i == 0 ? spec_.image_channels + z : channels[i - 1];
    down_.push_back(register_module("down" + std::to_string(i), conv4x4_s2(in, channels[i])));
  }
  bottleneck_ = register_module(
      "bottleneck",
      nn::Conv2d(nn::Conv2dOptions(channels[depth - 1] + z, channels[depth - 1], 3).padding(1)));

  // up_[i] maps level i+1 (concatenated with the encoder skip) to level i
  for (std::size_t i = 0; i < depth; ++i) {
    const auto in = channels[i] * 2;
    const auto out = i == 0 ? spec_.image_channels : channels[i - 1];
    up_.push_back(register_module("up" + std::to_string(i), deconv4x4_s2(in, out)));
  }
}

torch::Tensor UnetGenerator::forward(const torch::Tensor& source, const torch::Tensor& codes) {
  if (source.dim() != 4 || codes.dim() != 2 || source.size(0) != codes.size(0)) {
    throw ArgumentError("generator expects source [B,C,H,W] and codes [B,z] with equal B");
  }
  auto x = torch::cat({source, replicate_code(codes, source.size(2), source.size(3))}, 1);
  std::vector<torch::Tensor> skips;
  for (std::size_t i = 0; i < down_.size(); ++i) {
    x = down_[i]->forward(x);
    x = torch::relu(i == 0 ? x : instance_norm(x));
    skips.push_back(x);
  }
  x = torch::relu(
      bottleneck_->forward(torch::cat({x, replicate_code(codes, x.size(2), x.size(3))}, 1)));
  for (std::size_t i = up_.size(); i-- > 0;) {
    x = up_[i]->forward(torch::cat({x, skips[i]}, 1));
    x = i == 0 ? torch::tanh(x) : torch::relu(instance_norm(x));
  }
  return x;
}

MlpGenerator::MlpGenerator(const NetworkSpec& spec) : spec_(spec) {
  spec_.validate();
  const auto features = spec_.image_features();
  body_ = register_module(
      "body", nn::Sequential(nn::Linear(features + spec_.z_dim, spec_.mlp_hidden), nn::ReLU(),
                             nn::Linear(spec_.mlp_hidden, spec_.mlp_hidden), nn::ReLU(),
                             nn::Linear(spec_.mlp_hidden, features), nn::Tanh()));
}

torch::Tensor MlpGenerator::forward(const torch::Tensor& source, const torch::Tensor& codes) {
  if (source.dim() != 4 || codes.dim() != 2 || source.size(0) != codes.size(0)) {
    throw ArgumentError("generator expects source [B,C,H,W] and codes [B,z] with equal B");
  }
  auto out = body_->forward(torch::cat({flatten_images(source), codes}, 1));
  return out.view(source.sizes());
}

// --- discriminators ---------------------------------------------------------

MultiScaleDiscriminator::MultiScaleDiscriminator(const NetworkSpec& spec) {
  spec.validate();
  const auto w = spec.base_width;
  for (std::int64_t s = 0; s < spec.n_discriminator_scales; ++s) {
    nn::Sequential patch(
        conv4x4_s2(spec.image_channels, w), nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(kLeakySlope)),
        conv4x4_s2(w, 2 * w), nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(kLeakySlope)),
        nn::Conv2d(nn::Conv2dOptions(2 * w, 1, 4).stride(1).padding(1)));
    scales_.push_back(register_module("scale" + std::to_string(s), patch));
  }
}

std::vector<torch::Tensor> MultiScaleDiscriminator::forward(const torch::Tensor& images) {
  std::vector<torch::Tensor> logits;
  auto x = images;
  for (std::size_t s = 0; s < scales_.size(); ++s) {
    if (s > 0) x = F::avg_pool2d(x, F::AvgPool2dFuncOptions(2).stride(2));
    logits.push_back(scales_[s]->forward(x));
  }
  return logits;
}

MlpDiscriminator::MlpDiscriminator(const NetworkSpec& spec) {
  spec.validate();
  body_ = register_module(
      "body",
      nn::Sequential(nn::Linear(spec.image_features(), spec.mlp_hidden),
                     nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(kLeakySlope)),
                     nn::Linear(spec.mlp_hidden, spec.mlp_hidden),
                     nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(kLeakySlope)),
                     nn::Linear(spec.mlp_hidden, 1)));
}

std::vector<torch::Tensor> MlpDiscriminator::forward(const torch::Tensor& images) {
  return {body_->forward(flatten_images(images))};
}

// --- statistics networks ----------------------------------------------------

StatisticsNetwork::StatisticsNetwork(const NetworkSpec& spec) : spec_(spec) {
  spec_.validate();
  const auto channels = spec_.channel_schedule();
  for (std::size_t i = 0; i < channels.size(); ++i) {
    const auto in = (i == 0 ? spec_.image_channels : channels[i - 1]) + spec_.z_dim;
    convs_.push_back(register_module("conv" + std::to_string(i), conv4x4_s2(in, channels[i])));
  }
  fc1_ = register_module("fc1", nn::Linear(fc_input_features(), kHidden));
  fc2_ = register_module("fc2", nn::Linear(kHidden, 1));
}

torch::Tensor StatisticsNetwork::forward(const torch::Tensor& codes, const torch::Tensor& images) {
  if (images.dim() != 4 || codes.size(0) != images.size(0)) {
    throw ArgumentError("statistics network expects images [B,C,H,W] and matching codes");
  }
  auto x = images;
  for (auto& conv : convs_) {
    x = torch::elu(conv->forward(torch::cat({x, code_map_like(codes, x.size(2), x.size(3))}, 1)));
  }
  x = torch::cat({x.flatten(1), code_vector(codes)}, 1);
  x = torch::elu(fc1_->forward(x));
  return fc2_->forward(x).squeeze(1);
}

std::vector<std::int64_t> StatisticsNetwork::conv_input_channels() const {
  std::vector<std::int64_t> in;
  for (const auto& conv : convs_) in.push_back(conv->options.in_channels());
  return in;
}

std::vector<std::int64_t> StatisticsNetwork::conv_output_channels() const {
  std::vector<std::int64_t> out;
  for (const auto& conv : convs_) out.push_back(conv->options.out_channels());
  return out;
}

std::int64_t StatisticsNetwork::fc_input_features() const {
  const auto last = spec_.channel_schedule().back();
  const auto side = spec_.image_size >> spec_.conv_depth();
  return side * side * last + spec_.z_dim;
}

MlpCritic::MlpCritic(std::int64_t code_dim, std::int64_t image_features,
                     std::vector<std::int64_t> hidden) {
  if (code_dim < 1 || image_features < 1) {
    throw ArgumentError("MlpCritic requires positive input sizes");
  }
  nn::Sequential body;
  auto in = code_dim + image_features;
  for (auto h : hidden) {
    body->push_back(nn::Linear(in, h));
    body->push_back(nn::ELU());
    in = h;
  }
  body->push_back(nn::Linear(in, 1));
  body_ = register_module("body", body);
}

torch::Tensor MlpCritic::forward(const torch::Tensor& codes, const torch::Tensor& images) {
  if (codes.size(0) != images.size(0)) {
    throw ArgumentError("critic expects matching code and image batches");
  }
  return body_->forward(torch::cat({code_vector(codes), flatten_images(images)}, 1)).squeeze(1);
}

// --- encoders ---------------------------------------------------------------

ConvEncoder::ConvEncoder(const NetworkSpec& spec) {
  spec.validate();
  const auto channels = spec.channel_schedule();
  nn::Sequential features;
  auto in = spec.image_channels;
  for (auto c : channels) {
    features->push_back(conv4x4_s2(in, c));
    features->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(kLeakySlope)));
    in = c;
  }
  features_ = register_module("features", features);
  const auto side = spec.image_size >> spec.conv_depth();
  head_ = register_module("head", nn::Linear(side * side * in, spec.z_dim));
}

torch::Tensor ConvEncoder::forward(const torch::Tensor& images) {
  return head_->forward(features_->forward(images).flatten(1));
}

MlpEncoder::MlpEncoder(const NetworkSpec& spec) {
  spec.validate();
  body_ = register_module(
      "body", nn::Sequential(nn::Linear(spec.image_features(), spec.mlp_hidden), nn::ReLU(),
                             nn::Linear(spec.mlp_hidden, spec.z_dim)));
}

torch::Tensor MlpEncoder::forward(const torch::Tensor& images) {
  return body_->forward(flatten_images(images));
}

// --- builders ---------------------------------------------------------------

std::shared_ptr<Generator> build_generator(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::shared_ptr<Generator> g;
  if (spec.arch == Architecture::conv) {
    g = std::make_shared<UnetGenerator>(spec);
  } else {
    g = std::make_shared<MlpGenerator>(spec);
  }
  init_parameters(*g, seed);
  return g;
}

std::shared_ptr<Discriminator> build_discriminator(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::shared_ptr<Discriminator> d;
  if (spec.arch == Architecture::conv) {
    d = std::make_shared<MultiScaleDiscriminator>(spec);
  } else {
    d = std::make_shared<MlpDiscriminator>(spec);
  }
  init_parameters(*d, seed);
  return d;
}

std::shared_ptr<Critic> build_statistics_network(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  if (spec.arch == Architecture::mlp) {
    return build_mlp_critic(spec.z_dim, spec.image_features(), {spec.mlp_hidden, spec.mlp_hidden},
                            seed);
  }
  auto t = std::make_shared<StatisticsNetwork>(spec);
  init_parameters(*t, seed);
  zero_output_layer(*t);
  return t;
}

std::shared_ptr<MlpCritic> build_mlp_critic(std::int64_t code_dim, std::int64_t image_features,
                                            std::vector<std::int64_t> hidden, std::uint64_t seed) {
  auto t = std::make_shared<MlpCritic>(code_dim, image_features, std::move(hidden));
  init_parameters(*t, seed);
  zero_output_layer(*t);
  return t;
}

std::shared_ptr<Encoder> build_encoder(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::shared_ptr<Encoder> e;
  if (spec.arch == Architecture::conv) {
    e = std::make_shared<ConvEncoder>(spec);
  } else {
    e = std::make_shared<MlpEncoder>(spec);
  }
  init_parameters(*e, seed);
  return e;
}

std::int64_t parameter_count(const torch::nn::Module& module) {
  std::int64_t total = 0;
  for (const auto& p : module.parameters()) total += p.numel();
  return total;
}

}  // namespace migan
