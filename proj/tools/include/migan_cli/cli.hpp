#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace migan::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntime = 3;

/// Entry point of the `migan` binary: train, eval, sample, interpolate,
/// mi-bench and plot subcommands. Returns the process exit code.
int run(int argc, const char* const* argv);

struct MiBenchOptions {
  std::vector<double> rhos{0.0, 0.3, 0.6, 0.9};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::int64_t steps = 2000;
  std::int64_t batch = 256;
  std::int64_t eval_batch = 8192;
  std::int64_t dim = 1;
  std::vector<std::int64_t> hidden{64, 64};
  double lr = 1e-3;
};

struct MiBenchRow {
  double rho = 0.0;
  std::uint64_t seed = 0;
  std::string estimator;  // "jsd" or "dv"
  double estimate = 0.0;  // trained critic on a fresh evaluation batch
  double analytic_mi = 0.0;
};

/// One JSD and one DV critic per (rho, seed). Throws ArgumentError for |rho| >= 1.
std::vector<MiBenchRow> run_mi_bench(const MiBenchOptions& options);
void write_mi_bench_csv(const std::filesystem::path& path, const std::vector<MiBenchRow>& rows);
/// Mean estimate per rho for each estimator plus the analytic curve.
void write_mi_bench_plot(const std::filesystem::path& path, const std::vector<MiBenchRow>& rows);

}  // namespace migan::cli
