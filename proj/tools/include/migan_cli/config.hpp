#pragma once

// INI run configuration: sections run, train, weights, network, data,
// metrics and gc. Every key has a default; unknown keys are errors.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "migan/data.hpp"
#include "migan/evaluation.hpp"
#include "migan/training.hpp"

namespace migan::cli {

struct DataConfig {
  std::string kind = "shapes_colors";  // shapes_colors | cond_gmm | folder
  std::filesystem::path root;          // folder: <root>/source, <root>/target
  std::filesystem::path test_root;     // folder: optional held-out inputs
  std::int64_t n_shapes = 1000;
  std::string palette = "continuous_hue";
  std::int64_t k_colors = 8;
  std::int64_t n_modes = 5;
  std::int64_t n_samples = 2000;
  std::int64_t n_test = 100;
  std::uint64_t seed = 0;
  std::uint64_t test_seed = 1;
};

struct RunConfig {
  std::string name = "run";
  std::filesystem::path output_root = "runs";
  TrainConfig train;
  DataConfig data;
  EvalProtocol metrics;
};

/// Flat `section.key -> value` view with declaration order preserved.
using KeyValues = std::vector<std::pair<std::string, std::string>>;

RunConfig default_config();

/// Throws ConfigError naming the offending `section.key`.
RunConfig parse_config(const std::string& ini_text, const std::vector<std::string>& overrides = {});
RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// Applies one `section.key=value` assignment.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

/// Every key with its current value, as INI text that parse_config accepts.
std::string to_ini(const RunConfig& config);
KeyValues flatten(const RunConfig& config);

/// Validates the whole config; throws ConfigError.
void validate(const RunConfig& config);

/// Output directory: $MIGAN_OUTPUT_ROOT or run.output_root, joined with run.name.
std::filesystem::path run_directory(const RunConfig& config);

/// Training data and held-out inputs described by the data section.
struct LoadedData {
  Dataset train;
  Dataset test;
  std::vector<std::string> warnings;
};
LoadedData load_data(const RunConfig& config);

}  // namespace migan::cli
