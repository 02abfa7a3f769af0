#include "migan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iostream>
#include <numeric>

#include <boost/math/distributions/normal.hpp>
#include "json.hpp"

#include "migan/data.hpp"
#include "migan/errors.hpp"

namespace migan {

namespace F = torch::nn::functional;

namespace {

constexpr std::int64_t kEmbedChunk = 512;

torch::Tensor flatten64(const torch::Tensor& x) {
  return x.detach().reshape({x.size(0), -1}).to(torch::kFloat64);
}

torch::Tensor sqrtm_psd(const torch::Tensor& m) {
  auto [evals, evecs] = torch::linalg_eigh(m);
  auto root = evals.clamp_min(0.0).sqrt();
  return evecs.matmul(torch::diag(root)).matmul(evecs.transpose(0, 1));
}

std::pair<torch::Tensor, torch::Tensor> gaussian_fit(const torch::Tensor& f) {
  auto mu = f.mean(0);
  auto centered = f - mu;
  auto cov = centered.transpose(0, 1).matmul(centered) / static_cast<double>(f.size(0) - 1);
  return {mu, cov};
}

std::uint64_t content_hash(const torch::Tensor& image) {
  auto c = image.detach().to(torch::kFloat32).contiguous();
  const auto* bytes = reinterpret_cast<const unsigned char*>(c.data_ptr<float>());
  const auto n = static_cast<std::size_t>(c.numel()) * sizeof(float);
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  return h;
}

void warn(std::vector<std::string>& sink, const std::string& message) {
  std::cerr << "warning: " << message << '\n';
  sink.push_back(message);
}

// Squared distances [N, K] between rows of x and rows of c.
torch::Tensor squared_distances(const torch::Tensor& x, const torch::Tensor& c) {
  auto x2 = x.pow(2).sum(1, true);
  auto c2 = c.pow(2).sum(1).unsqueeze(0);
  return (x2 - 2.0 * x.matmul(c.transpose(0, 1)) + c2).clamp_min(0.0);
}

std::vector<std::int64_t> bincount(const torch::Tensor& labels, std::int64_t k) {
  auto counts = torch::bincount(labels, {}, k);
  std::vector<std::int64_t> out(static_cast<std::size_t>(k));
  for (std::int64_t i = 0; i < k; ++i) out[static_cast<std::size_t>(i)] = counts[i].item<std::int64_t>();
  return out;
}

}  // namespace

// --- embedders --------------------------------------------------------------

torch::Tensor FlattenEmbedder::embed(const torch::Tensor& images) const {
  auto f = flatten64(images);
  if (f.size(1) != dim_) throw ArgumentError("flatten embedder: unexpected feature size");
  return f;
}

RandomConvEmbedder::RandomConvEmbedder(std::int64_t in_channels, std::uint64_t seed,
                                       std::vector<std::int64_t> widths)
    : in_channels_(in_channels), seed_(seed) {
  if (in_channels < 1 || widths.empty()) throw ArgumentError("invalid embedder configuration");
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  auto in = in_channels;
  for (auto w : widths) {
    const double std = std::sqrt(2.0 / static_cast<double>(in * 9));
    weights_.push_back(torch::randn({w, in, 3, 3}, gen, torch::kFloat32) * std);
    biases_.push_back(torch::zeros({w}));
    in = w;
  }
}

torch::Tensor RandomConvEmbedder::embed(const torch::Tensor& images) const {
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> chunks;
  for (std::int64_t start = 0; start < images.size(0); start += kEmbedChunk) {
    auto x = images.slice(0, start, std::min(start + kEmbedChunk, images.size(0))).detach().to(torch::kFloat32);
    std::vector<torch::Tensor> feats{x.mean({2, 3}), x.std({2, 3})};
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      x = torch::relu(F::conv2d(x, weights_[i], F::Conv2dFuncOptions().bias(biases_[i]).padding(1)));
      feats.push_back(x.mean({2, 3}));
      if (x.size(2) >= 2) x = F::avg_pool2d(x, F::AvgPool2dFuncOptions(2));
    }
    chunks.push_back(torch::cat(feats, 1).to(torch::kFloat64));
  }
  return torch::cat(chunks, 0);
}

std::int64_t RandomConvEmbedder::feature_dim() const {
  std::int64_t d = 2 * in_channels_;
  for (const auto& w : weights_) d += w.size(0);
  return d;
}

std::string RandomConvEmbedder::tag() const {
  std::string widths;
  for (const auto& w : weights_) widths += (widths.empty() ? "" : "-") + std::to_string(w.size(0));
  return "random_conv[" + widths + "]/seed=" + std::to_string(seed_);
}

std::unique_ptr<Embedder> default_embedder(std::int64_t channels, std::int64_t image_size,
                                           std::uint64_t seed) {
  if (image_size <= 1) return std::make_unique<FlattenEmbedder>(channels * image_size * image_size);
  return std::make_unique<RandomConvEmbedder>(channels, seed);
}

// --- Frechet distance -------------------------------------------------------

double frechet_distance(const torch::Tensor& features_a, const torch::Tensor& features_b,
                        double eps) {
  if (features_a.dim() != 2 || features_b.dim() != 2 || features_a.size(1) != features_b.size(1)) {
    throw ArgumentError("frechet_distance expects [N, F] sets with equal F");
  }
  if (features_a.size(0) < 2 || features_b.size(0) < 2) {
    throw ArgumentError("frechet_distance needs at least 2 samples per set");
  }
  auto fa = features_a.to(torch::kFloat64);
  auto fb = features_b.to(torch::kFloat64);
  auto [mu_a, cov_a] = gaussian_fit(fa);
  auto [mu_b, cov_b] = gaussian_fit(fb);
  auto eye = torch::eye(fa.size(1), torch::kFloat64);
  cov_a = cov_a + eps * eye;
  cov_b = cov_b + eps * eye;
  // tr (S_a S_b)^1/2 = tr (S_a^1/2 S_b S_a^1/2)^1/2
  auto root_a = sqrtm_psd(cov_a);
  auto inner = root_a.matmul(cov_b).matmul(root_a);
  inner = 0.5 * (inner + inner.transpose(0, 1));
  auto trace_sqrt = torch::linalg_eigvalsh(inner).clamp_min(0.0).sqrt().sum();
  auto mean_term = (mu_a - mu_b).pow(2).sum();
  auto value = mean_term + cov_a.trace() + cov_b.trace() - 2.0 * trace_sqrt;
  return std::max(0.0, value.item<double>());
}

double fid_proxy(const Embedder& embedder, const torch::Tensor& real, const torch::Tensor& generated) {
  if (real.size(0) < 2 || generated.size(0) < 2) {
    throw ArgumentError("fid_proxy needs at least 2 samples per set");
  }
  torch::NoGradGuard no_grad;
  return frechet_distance(embedder.embed(real), embedder.embed(generated));
}

// --- bins -------------------------------------------------------------------

torch::Tensor BinModel::assign(const torch::Tensor& samples) const {
  torch::NoGradGuard no_grad;
  auto x = samples.detach().reshape({samples.size(0), -1}).to(torch::kFloat32);
  if (x.size(1) != centroids.size(1)) throw ArgumentError("sample dimension does not match bins");
  return squared_distances(x, centroids).argmin(1);
}

BinModel fit_bins(const torch::Tensor& train, std::int64_t k, std::uint64_t seed,
                  std::int64_t max_iterations) {
  if (k < 1) throw ArgumentError("fit_bins requires K >= 1");
  const auto n = train.size(0);
  if (n < kMinSamplesPerBin * k) {
    throw ArgumentError("fit_bins needs at least " + std::to_string(kMinSamplesPerBin) +
                        " training samples per bin (" + std::to_string(kMinSamplesPerBin * k) +
                        " for K=" + std::to_string(k) + "), got " + std::to_string(n));
  }
  torch::NoGradGuard no_grad;
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  auto x = train.detach().reshape({n, -1}).to(torch::kFloat32).contiguous();

  // k-means++ seeding
  auto centroids = torch::empty({k, x.size(1)}, torch::kFloat32);
  auto first = torch::randint(n, {1}, gen, torch::kInt64).item<std::int64_t>();
  centroids[0] = x[first];
  auto closest = squared_distances(x, centroids.slice(0, 0, 1)).squeeze(1);
  for (std::int64_t c = 1; c < k; ++c) {
    const double total = closest.sum().item<double>();
    std::int64_t pick = 0;
    if (total > 0.0) {
      pick = torch::multinomial(closest.to(torch::kFloat64), 1, false, gen).item<std::int64_t>();
    } else {
      pick = torch::randint(n, {1}, gen, torch::kInt64).item<std::int64_t>();
    }
    centroids[c] = x[pick];
    closest = torch::minimum(closest, squared_distances(x, centroids.slice(0, c, c + 1)).squeeze(1));
  }

  auto labels = torch::full({n}, -1, torch::kInt64);
  std::int64_t iterations = 0;
  auto lloyd = [&]() {
    for (std::int64_t it = 0; it < max_iterations; ++it) {
      ++iterations;
      auto d = squared_distances(x, centroids);
      auto new_labels = d.argmin(1);
      const bool changed = !new_labels.equal(labels);
      labels = new_labels;
      auto sums = torch::zeros_like(centroids).index_add_(0, labels, x);
      auto counts = torch::bincount(labels, {}, k).to(torch::kFloat32);
      auto nonempty = counts > 0;
      auto means = sums / counts.clamp_min(1.0).unsqueeze(1);
      centroids = torch::where(nonempty.unsqueeze(1), means, centroids);
      // empty bins take the point farthest from its centroid
      if (!nonempty.all().item<bool>()) {
        auto far = d.gather(1, labels.unsqueeze(1)).squeeze(1);
        auto empties = (~nonempty).nonzero().squeeze(1);
        for (std::int64_t e = 0; e < empties.size(0); ++e) {
          auto idx = far.argmax().item<std::int64_t>();
          centroids[empties[e].item<std::int64_t>()] = x[idx];
          far[idx] = -1.0;
        }
        continue;
      }
      if (!changed) break;
    }
    labels = squared_distances(x, centroids).argmin(1);
  };
  lloyd();

  // Under-filled bins move into the largest bin, which is cut at the median
  // of its principal axis; outlier seeds would just recreate tiny bins.
  for (std::int64_t round = 0; round < 4 * k; ++round) {
    auto counts = torch::bincount(labels, {}, k);
    auto smallest = counts.argmin().item<std::int64_t>();
    if (counts[smallest].item<std::int64_t>() >= kMinSamplesPerBin) break;
    auto largest = counts.argmax().item<std::int64_t>();
    auto members = x.index_select(0, (labels == largest).nonzero().squeeze(1));
    auto centered = members - members.mean(0, true);
    auto axis = centered[centered.pow(2).sum(1).argmax()].clone();
    for (int p = 0; p < 20; ++p) {
      axis = centered.t().matmul(centered.matmul(axis));
      axis = axis / axis.norm().clamp_min(1e-12);
    }
    auto proj = centered.matmul(axis);
    auto upper = proj > proj.median();
    if (!upper.any().item<bool>() || upper.all().item<bool>()) break;  // identical members
    centroids[largest] = members.index({~upper}).mean(0);
    centroids[smallest] = members.index({upper}).mean(0);
    lloyd();
  }
  BinModel model;
  model.k = k;
  model.centroids = centroids;
  model.train_size = n;
  model.iterations = iterations;
  model.train_counts = bincount(model.assign(x), k);
  const auto min_count = *std::min_element(model.train_counts.begin(), model.train_counts.end());
  if (min_count < kMinSamplesPerBin) {
    throw ArgumentError("k-means left a bin with " + std::to_string(min_count) +
                        " training samples (< " + std::to_string(kMinSamplesPerBin) +
                        "); choose a smaller K");
  }
  return model;
}

double categorical_jsd(const std::vector<double>& p, const std::vector<double>& q, double eps) {
  if (p.size() != q.size() || p.empty()) throw ArgumentError("categorical_jsd: size mismatch");
  std::vector<double> ps(p.size());
  std::vector<double> qs(q.size());
  double sp = 0.0;
  double sq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    ps[i] = p[i] + eps;
    qs[i] = q[i] + eps;
    sp += ps[i];
    sq += qs[i];
  }
  double jsd = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double a = ps[i] / sp;
    const double b = qs[i] / sq;
    const double m = 0.5 * (a + b);
    jsd += 0.5 * a * std::log(a / m) + 0.5 * b * std::log(b / m);
  }
  return std::clamp(jsd, 0.0, std::log(2.0));
}

NdbResult ndb_jsd_from_counts(const std::vector<std::int64_t>& train_counts,
                              const std::vector<std::int64_t>& generated_counts, double alpha) {
  if (train_counts.size() != generated_counts.size() || train_counts.empty()) {
    throw ArgumentError("bin count vectors differ in length");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw ArgumentError("alpha must be in (0, 1)");
  const double nt = static_cast<double>(std::accumulate(train_counts.begin(), train_counts.end(), std::int64_t{0}));
  const double ng = static_cast<double>(std::accumulate(generated_counts.begin(), generated_counts.end(), std::int64_t{0}));
  if (nt <= 0.0 || ng <= 0.0) throw ArgumentError("ndb needs non-empty sample sets");
  const double critical =
      boost::math::quantile(boost::math::normal_distribution<double>(), 1.0 - alpha / 2.0);

  NdbResult r;
  r.alpha = alpha;
  const auto k = train_counts.size();
  r.significant.resize(k);
  r.train_proportions.resize(k);
  r.generated_proportions.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double pt = static_cast<double>(train_counts[i]) / nt;
    const double pg = static_cast<double>(generated_counts[i]) / ng;
    const double pooled = (static_cast<double>(train_counts[i]) + static_cast<double>(generated_counts[i])) / (nt + ng);
    const double se = std::sqrt(pooled * (1.0 - pooled) * (1.0 / nt + 1.0 / ng));
    const bool sig = se > 0.0 && std::abs(pt - pg) / se > critical;
    r.significant[i] = sig;
    r.train_proportions[i] = pt;
    r.generated_proportions[i] = pg;
    if (sig) ++r.ndb;
  }
  r.jsd = categorical_jsd(r.train_proportions, r.generated_proportions);
  return r;
}

NdbResult ndb_jsd(const BinModel& bins, const torch::Tensor& generated, double alpha) {
  if (!generated.defined() || generated.size(0) == 0) {
    throw ArgumentError("ndb_jsd needs a non-empty generated set");
  }
  return ndb_jsd_from_counts(bins.train_counts, bincount(bins.assign(generated), bins.k), alpha);
}

// --- diversity and sampling protocols ---------------------------------------

DiversityResult diversity_lpips_proxy(const Embedder& embedder, const GenerateFn& model,
                                      const torch::Tensor& inputs, const DiversityOptions& options) {
  if (options.n_inputs < 1 || options.pairs_per_input < 1 || options.z_dim < 1) {
    throw ArgumentError("diversity protocol counts must be positive");
  }
  if (!inputs.defined() || inputs.size(0) == 0) throw ArgumentError("diversity needs inputs");
  torch::NoGradGuard no_grad;
  DiversityResult result;

  // Order-independent selection: keep the inputs with the smallest content hash.
  std::vector<std::pair<std::uint64_t, std::int64_t>> keyed;
  for (std::int64_t i = 0; i < inputs.size(0); ++i) keyed.emplace_back(content_hash(inputs[i]), i);
  std::sort(keyed.begin(), keyed.end());
  auto n_inputs = options.n_inputs;
  if (static_cast<std::int64_t>(keyed.size()) < n_inputs) {
    warn(result.warnings, "diversity protocol requested " + std::to_string(n_inputs) +
                              " inputs but only " + std::to_string(keyed.size()) + " are available");
    n_inputs = static_cast<std::int64_t>(keyed.size());
  }

  const auto pairs = options.pairs_per_input;
  std::vector<double> per_input;
  for (std::int64_t j = 0; j < n_inputs; ++j) {
    const auto& [hash, index] = keyed[static_cast<std::size_t>(j)];
    auto gen = at::make_generator<at::CPUGeneratorImpl>(derive_seed(options.seed, hash));
    auto codes = torch::randn({2 * pairs, options.z_dim}, gen, torch::kFloat32);
    auto a = inputs[index].unsqueeze(0).expand({2 * pairs, -1, -1, -1}).contiguous();
    auto out = model(a, codes);
    auto f = embedder.embed(out);
    auto d = (f.slice(0, 0, pairs) - f.slice(0, pairs, 2 * pairs)).pow(2).sum(1).sqrt();
    per_input.push_back(d.sum().item<double>());
  }
  std::sort(per_input.begin(), per_input.end());  // order-free summation
  const double total = std::accumulate(per_input.begin(), per_input.end(), 0.0);
  result.n_inputs = n_inputs;
  result.pairs_per_input = pairs;
  result.n_pairs = n_inputs * pairs;
  result.value = total / static_cast<double>(result.n_pairs);
  return result;
}

SampleSet fid_sampling_protocol(const GenerateFn& model, const torch::Tensor& test_inputs,
                                const SamplingOptions& options) {
  if (!test_inputs.defined() || test_inputs.size(0) == 0) {
    throw ArgumentError("fid_sampling_protocol needs a non-empty test set");
  }
  if (options.n_inputs < 1 || options.codes_per_input < 1 || options.z_dim < 1) {
    throw ArgumentError("sampling protocol counts must be positive");
  }
  torch::NoGradGuard no_grad;
  SampleSet set;
  auto gen = at::make_generator<at::CPUGeneratorImpl>(options.seed);
  const auto available = test_inputs.size(0);
  torch::Tensor chosen;
  if (available >= options.n_inputs) {
    chosen = torch::randperm(available, gen, torch::kInt64).slice(0, 0, options.n_inputs);
  } else {
    warn(set.warnings, "sampling protocol requested " + std::to_string(options.n_inputs) +
                           " inputs but only " + std::to_string(available) +
                           " are available; scaling down to " +
                           std::to_string(available * options.codes_per_input) + " samples");
    chosen = torch::arange(available, torch::kInt64);
  }
  const auto per = options.codes_per_input;
  std::vector<torch::Tensor> samples;
  std::vector<torch::Tensor> index;
  for (std::int64_t j = 0; j < chosen.size(0); ++j) {
    const auto i = chosen[j].item<std::int64_t>();
    auto codes = torch::randn({per, options.z_dim}, gen, torch::kFloat32);
    auto a = test_inputs[i].unsqueeze(0).expand({per, -1, -1, -1}).contiguous();
    samples.push_back(model(a, codes).detach());
    index.push_back(torch::full({per}, i, torch::kInt64));
  }
  set.samples = torch::cat(samples, 0);
  set.input_index = torch::cat(index, 0);
  set.n_inputs = chosen.size(0);
  set.codes_per_input = per;
  return set;
}

// --- reports ----------------------------------------------------------------

std::string to_json(const std::vector<MetricReport>& reports, int indent) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : reports) {
    nlohmann::json protocol;
    protocol["counts"] = r.protocol.counts;
    protocol["seeds"] = r.protocol.seeds;
    protocol["K"] = r.protocol.k ? nlohmann::json(*r.protocol.k) : nlohmann::json(nullptr);
    protocol["alpha"] = r.protocol.alpha ? nlohmann::json(*r.protocol.alpha) : nlohmann::json(nullptr);
    out.push_back({{"metric", r.metric},
                   {"value", r.value},
                   {"protocol", protocol},
                   {"embedder_tag", r.embedder_tag}});
  }
  return out.dump(indent);
}

std::vector<MetricReport> reports_from_json(const std::string& text) {
  const auto doc = nlohmann::json::parse(text);
  std::vector<MetricReport> reports;
  for (const auto& item : doc) {
    MetricReport r;
    r.metric = item.at("metric").get<std::string>();
    r.value = item.at("value").get<double>();
    r.embedder_tag = item.value("embedder_tag", "");
    const auto& p = item.at("protocol");
    r.protocol.counts = p.value("counts", std::map<std::string, std::int64_t>{});
    r.protocol.seeds = p.value("seeds", std::vector<std::uint64_t>{});
    if (p.contains("K") && !p["K"].is_null()) r.protocol.k = p["K"].get<std::int64_t>();
    if (p.contains("alpha") && !p["alpha"].is_null()) r.protocol.alpha = p["alpha"].get<double>();
    reports.push_back(std::move(r));
  }
  return reports;
}

}  // namespace migan
