#pragma once

// Full metric pass over one model: fid_proxy, ndb, jsd and diversity.

#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "migan/losses.hpp"
#include "migan/metrics.hpp"

namespace migan {

struct EvalProtocol {
  std::int64_t k = 50;
  double alpha = 0.05;
  std::int64_t n_inputs = 100;
  std::int64_t codes_per_input = 50;
  std::int64_t pairs_per_input = 19;
  std::uint64_t seed = 0;
  std::uint64_t embedder_seed = 1234;
  std::uint64_t bin_seed = 0;

  void validate() const;
};

struct EvalResult {
  std::vector<MetricReport> reports;
  NdbResult ndb;
  double fid = 0.0;
  double diversity = 0.0;
  std::vector<std::string> warnings;

  double value(const std::string& metric) const;
};

/// `train_targets` are the real samples (FID reference and k-means bins);
/// `test_inputs` feed the sampling and diversity protocols.
EvalResult evaluate(const GenerateFn& model, const torch::Tensor& train_targets,
                    const torch::Tensor& test_inputs, std::int64_t z_dim, const EvalProtocol& protocol);

}  // namespace migan
