#include "migan/mi_core.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "migan/errors.hpp"

namespace migan {

namespace F = torch::nn::functional;

namespace {

at::Generator seeded_generator(std::uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  return gen;
}

void check_pair_shapes(const torch::Tensor& codes, const torch::Tensor& images) {
  if (!codes.defined() || !images.defined()) {
    throw ArgumentError("pair batch requires defined codes and images");
  }
  if (codes.dim() != 2) {
    throw ArgumentError("codes must be [batch, z_dim]");
  }
  if (images.dim() != 4) {
    throw ArgumentError("images must be [batch, channels, height, width]");
  }
  if (codes.size(0) != images.size(0)) {
    throw ArgumentError("code batch (" + std::to_string(codes.size(0)) + ") and image batch (" +
                        std::to_string(images.size(0)) + ") differ");
  }
  if (codes.size(0) == 0) {
    throw ArgumentError("pair batch is empty");
  }
}

void check_estimator_inputs(const PairBatch& pos, const PairBatch& neg) {
  if (pos.polarity != Polarity::positive) {
    throw ArgumentError("first batch must have positive polarity");
  }
  if (neg.polarity != Polarity::negative) {
    throw ArgumentError("second batch must have negative polarity");
  }
  check_pair_shapes(pos.codes, pos.images);
  check_pair_shapes(neg.codes, neg.images);
  if (pos.size() != neg.size()) {
    throw ArgumentError("positive and negative batches differ in size");
  }
}

}  // namespace

torch::Tensor sample_latent(std::int64_t batch, std::int64_t z_dim, at::Generator& gen) {
  if (batch < 1 || z_dim < 1) {
    throw ArgumentError("sample_latent requires batch >= 1 and z_dim >= 1");
  }
  return torch::randn({batch, z_dim}, gen, torch::kFloat32);
}

torch::Tensor sample_latent(std::int64_t batch, std::int64_t z_dim, std::uint64_t seed) {
  auto gen = seeded_generator(seed);
  return sample_latent(batch, z_dim, gen);
}

PairBatch make_positive_pairs(torch::Tensor codes, torch::Tensor images) {
  check_pair_shapes(codes, images);
  return PairBatch{std::move(codes), std::move(images), Polarity::positive};
}

torch::Tensor resample_distinct_codes(const torch::Tensor& codes, at::Generator& gen) {
  if (codes.dim() != 2 || codes.size(0) < 1) throw ArgumentError("codes must be [B, z_dim] with B >= 1");
  auto generating = codes.detach();
  auto fresh = torch::randn(generating.sizes(), gen, generating.scalar_type());
  // Exact equality has probability zero for continuous draws; redraw anyway.
  for (;;) {
    auto collide = (fresh == generating).all(1);
    if (!collide.any().item<bool>()) break;
    auto idx = collide.nonzero().squeeze(1);
    fresh.index_put_({idx}, torch::randn({idx.size(0), generating.size(1)}, gen,
                                         generating.scalar_type()));
  }
  return fresh;
}

PairBatch make_negative_pairs(const torch::Tensor& codes, const torch::Tensor& images,
                              at::Generator& gen) {
  check_pair_shapes(codes, images);
  return PairBatch{resample_distinct_codes(codes, gen), images, Polarity::negative};
}

PairBatch make_cross_negative_pairs(const torch::Tensor& codes, const torch::Tensor& other_images,
                                    const torch::Tensor& other_codes) {
  check_pair_shapes(codes, other_images);
  if (other_codes.sizes() != codes.sizes()) {
    throw ArgumentError("other_codes must have the shape of codes");
  }
  if ((other_codes.detach() == codes.detach()).all(1).any().item<bool>()) {
    throw ArgumentError("a negative image was generated from its own paired code");
  }
  return PairBatch{codes.detach(), other_images, Polarity::negative};
}

PairBatch make_negative_pairs(const torch::Tensor& codes, const torch::Tensor& images,
                              std::uint64_t seed) {
  auto gen = seeded_generator(seed);
  return make_negative_pairs(codes, images, gen);
}

torch::Tensor jsd_bound_from_logits(const torch::Tensor& pos_logits,
                                    const torch::Tensor& neg_logits) {
  if (pos_logits.numel() == 0 || neg_logits.numel() == 0) {
    throw ArgumentError("estimator needs non-empty logits");
  }
  // log sigma(t) = -softplus(-t);  log(1 - sigma(t)) = -softplus(t)
  auto pos_term = -F::softplus(-pos_logits).mean();
  auto neg_term = -F::softplus(neg_logits).mean();
  return pos_term + neg_term;
}

torch::Tensor jsd_mi_estimate(Critic& critic, const PairBatch& pos, const PairBatch& neg) {
  check_estimator_inputs(pos, neg);
  auto pos_logits = critic.forward(pos.codes, pos.images);
  auto neg_logits = critic.forward(neg.codes, neg.images);
  return jsd_bound_from_logits(pos_logits, neg_logits);
}

torch::Tensor dv_bound_from_logits(const torch::Tensor& pos_logits,
                                   const torch::Tensor& neg_logits) {
  if (pos_logits.numel() == 0 || neg_logits.numel() == 0) {
    throw ArgumentError("estimator needs non-empty logits");
  }
  const auto n = static_cast<double>(neg_logits.numel());
  // logsumexp subtracts the max internally
  auto log_mean_exp = torch::logsumexp(neg_logits.reshape({-1}), 0) - std::log(n);
  return pos_logits.mean() - log_mean_exp;
}

torch::Tensor dv_mi_estimate(Critic& critic, const PairBatch& pos, const PairBatch& neg) {
  check_estimator_inputs(pos, neg);
  auto pos_logits = critic.forward(pos.codes, pos.images);
  auto neg_logits = critic.forward(neg.codes, neg.images);
  return dv_bound_from_logits(pos_logits, neg_logits);
}

std::vector<double> train_estimator(Critic& critic, const PairSource& source,
                                    const EstimatorTrainOptions& options) {
  if (options.steps < 1) {
    throw ArgumentError("train_estimator requires steps >= 1");
  }
  torch::optim::Adam optimizer(
      critic.parameters(),
      torch::optim::AdamOptions(options.lr).betas({options.beta1, options.beta2}));
  critic.train();

  std::vector<double> trace;
  trace.reserve(static_cast<std::size_t>(options.steps));
  for (std::int64_t step = 0; step < options.steps; ++step) {
    auto [pos, neg] = source();
    auto estimate = options.objective == EstimatorObjective::jsd
                        ? jsd_mi_estimate(critic, pos, neg)
                        : dv_mi_estimate(critic, pos, neg);
    const double value = estimate.item<double>();
    if (!std::isfinite(value)) {
      throw TrainingError("non-finite estimator value", step);
    }
    optimizer.zero_grad();
    (-estimate).backward();
    optimizer.step();
    trace.push_back(value);
  }
  return trace;
}

void GaussianOracleSpec::validate() const {
  if (!(std::abs(rho) < 1.0)) {
    throw ArgumentError("Gaussian oracle requires |rho| < 1, got " + std::to_string(rho));
  }
  if (dim < 1) {
    throw ArgumentError("Gaussian oracle requires dim >= 1");
  }
}

double GaussianOracleSpec::analytic_mi() const {
  validate();
  return -0.5 * static_cast<double>(dim) * std::log1p(-rho * rho);
}

std::pair<PairBatch, PairBatch> gaussian_pairs(const GaussianOracleSpec& spec, std::int64_t batch,
                                               at::Generator& gen) {
  spec.validate();
  if (batch < 1) {
    throw ArgumentError("Gaussian oracle requires batch >= 1");
  }
  const double noise_scale = std::sqrt(1.0 - spec.rho * spec.rho);
  auto x = torch::randn({batch, spec.dim}, gen, torch::kFloat32);
  auto eps = torch::randn({batch, spec.dim}, gen, torch::kFloat32);
  auto y = spec.rho * x + noise_scale * eps;
  auto x_other = torch::randn({batch, spec.dim}, gen, torch::kFloat32);
  auto eps_other = torch::randn({batch, spec.dim}, gen, torch::kFloat32);
  auto y_other = spec.rho * x_other + noise_scale * eps_other;

  PairBatch pos{x, y.reshape({batch, spec.dim, 1, 1}), Polarity::positive};
  PairBatch neg{x, y_other.reshape({batch, spec.dim, 1, 1}), Polarity::negative};
  return {std::move(pos), std::move(neg)};
}

std::pair<PairBatch, PairBatch> gaussian_pairs(const GaussianOracleSpec& spec, std::int64_t batch,
                                               std::uint64_t seed) {
  auto gen = seeded_generator(seed);
  return gaussian_pairs(spec, batch, gen);
}

PairSource gaussian_pair_source(const GaussianOracleSpec& spec, std::int64_t batch,
                                std::uint64_t seed) {
  spec.validate();
  auto gen = std::make_shared<at::Generator>(seeded_generator(seed));
  return [spec, batch, gen]() { return gaussian_pairs(spec, batch, *gen); };
}

void write_trace_csv(const std::filesystem::path& path, const std::vector<TracePoint>& trace) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  out << "step,estimate\n";
  out.precision(9);
  for (const auto& p : trace) {
    out << p.step << ',' << p.estimate << '\n';
  }
  if (!out) {
    throw std::runtime_error("write failed for " + path.string());
  }
}

std::vector<TracePoint> read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open " + path.string());
  }
  std::vector<TracePoint> trace;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      if (line.find_first_not_of("0123456789-+., eE\r") != std::string::npos) continue;
    }
    std::istringstream row(line);
    std::string step_field;
    std::string value_field;
    if (!std::getline(row, step_field, ',') || !std::getline(row, value_field, ',')) {
      throw std::runtime_error("malformed trace row: " + line);
    }
    trace.push_back({std::stoll(step_field), std::stod(value_field)});
  }
  return trace;
}

}  // namespace migan
