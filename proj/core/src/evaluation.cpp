#include "migan/evaluation.hpp"

#include "migan/data.hpp"
#include "migan/errors.hpp"

namespace migan {

void EvalProtocol::validate() const {
  if (k < 1) throw ArgumentError("K must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ArgumentError("alpha must lie in (0, 1)");
  if (n_inputs < 1 || codes_per_input < 1 || pairs_per_input < 1) {
    throw ArgumentError("metric protocol counts must be positive");
  }
}

double EvalResult::value(const std::string& metric) const {
  for (const auto& r : reports) {
    if (r.metric == metric) return r.value;
  }
  throw ArgumentError("no metric named " + metric);
}

EvalResult evaluate(const GenerateFn& model, const torch::Tensor& train_targets,
                    const torch::Tensor& test_inputs, std::int64_t z_dim, const EvalProtocol& protocol) {
  protocol.validate();
  EvalResult out;
  const auto embedder =
      default_embedder(train_targets.size(1), train_targets.size(2), protocol.embedder_seed);

  SamplingOptions sampling{.n_inputs = protocol.n_inputs,
                           .codes_per_input = protocol.codes_per_input,
                           .seed = derive_seed(protocol.seed, 1),
                           .z_dim = z_dim};
  auto set = fid_sampling_protocol(model, test_inputs, sampling);
  out.warnings.insert(out.warnings.end(), set.warnings.begin(), set.warnings.end());

  out.fid = fid_proxy(*embedder, train_targets, set.samples);
  auto bins = fit_bins(train_targets, protocol.k, protocol.bin_seed);
  out.ndb = ndb_jsd(bins, set.samples, protocol.alpha);

  DiversityOptions div{.n_inputs = protocol.n_inputs,
                       .pairs_per_input = protocol.pairs_per_input,
                       .seed = derive_seed(protocol.seed, 2),
                       .z_dim = z_dim};
  auto d = diversity_lpips_proxy(*embedder, model, test_inputs, div);
  out.diversity = d.value;
  out.warnings.insert(out.warnings.end(), d.warnings.begin(), d.warnings.end());

  MetricProtocol sampling_protocol{.counts = {{"inputs", set.n_inputs},
                                              {"codes_per_input", set.codes_per_input},
                                              {"generated", set.samples.size(0)},
                                              {"real", train_targets.size(0)}},
                                   .seeds = {protocol.seed, protocol.embedder_seed}};
  MetricProtocol bin_protocol{.counts = {{"generated", set.samples.size(0)},
                                         {"train", bins.train_size}},
                              .seeds = {protocol.seed, protocol.bin_seed},
                              .k = protocol.k,
                              .alpha = protocol.alpha};
  MetricProtocol div_protocol{.counts = {{"inputs", d.n_inputs},
                                         {"pairs_per_input", d.pairs_per_input},
                                         {"pairs", d.n_pairs}},
                              .seeds = {protocol.seed, protocol.embedder_seed}};
  out.reports = {
      {"fid_proxy", out.fid, sampling_protocol, embedder->tag()},
      {"ndb", static_cast<double>(out.ndb.ndb), bin_protocol, "pixels"},
      {"jsd", out.ndb.jsd, bin_protocol, "pixels"},
      {"diversity", out.diversity, div_protocol, embedder->tag()},
  };
  return out;
}

}  // namespace migan
