#include "migan_cli/cli.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"

#include "migan/errors.hpp"
#include "migan/evaluation.hpp"
#include "migan/image_io.hpp"
#include "migan/mi_core.hpp"
#include "migan/plot.hpp"
#include "migan/training.hpp"
#include "migan_cli/config.hpp"

namespace migan::cli {

namespace {

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

// Config for a checkpoint: the snapshot stored in it, or an explicit file
// whose network must match the stored one.
struct CheckpointContext {
  RunConfig config;
  LoadedCheckpoint checkpoint;
};

CheckpointContext open_checkpoint(const std::filesystem::path& ckpt, const std::string& config_path,
                                  const std::vector<std::string>& overrides) {
  CheckpointContext ctx;
  ctx.checkpoint = load_checkpoint(ckpt);
  if (!config_path.empty()) {
    ctx.config = load_config(config_path, overrides);
  } else if (!ctx.checkpoint.metadata.empty()) {
    ctx.config = parse_config(ctx.checkpoint.metadata, overrides);
  } else {
    ctx.config = default_config();
    ctx.config.train = ctx.checkpoint.config;
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not section.key=value");
      apply_setting(ctx.config, o.substr(0, eq), o.substr(eq + 1));
    }
    validate(ctx.config);
  }
  if (!(ctx.config.train.spec == ctx.checkpoint.config.spec)) {
    throw CheckpointError("checkpoint network " + spec_to_json(ctx.checkpoint.config.spec) +
                          " does not match config network " + spec_to_json(ctx.config.train.spec));
  }
  return ctx;
}

torch::Tensor read_inputs(const std::vector<std::string>& paths, std::int64_t image_size) {
  std::vector<std::filesystem::path> files;
  for (const auto& p : paths) {
    if (std::filesystem::is_directory(p)) {
      std::vector<std::filesystem::path> found;
      for (const auto& e : std::filesystem::directory_iterator(p)) {
        if (e.path().extension() == ".png") found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.emplace_back(p);
    }
  }
  if (files.empty()) throw DatasetError("no input images given");
  std::vector<torch::Tensor> images;
  for (const auto& f : files) {
    std::string error;
    auto img = read_png(f, &error);
    if (!img) throw DatasetError("invalid input image " + f.string() + ": " + error);
    images.push_back(from_rgb8(*img));
  }
  return resize_images(torch::stack(images), image_size);
}

torch::Tensor choose_inputs(const CheckpointContext& ctx, const std::vector<std::string>& paths,
                            std::int64_t n_inputs) {
  if (!paths.empty()) {
    if (ctx.config.train.spec.image_size == 1) throw ArgumentError("point models take no image inputs");
    return read_inputs(paths, ctx.config.train.spec.image_size);
  }
  auto data = load_data(ctx.config);
  print_warnings(data.warnings);
  const auto n = std::min<std::int64_t>(n_inputs, data.test.source_count());
  if (n < 1) throw ArgumentError("--n-inputs must be >= 1");
  return data.test.source.slice(0, 0, n);
}

void write_point_samples(const std::filesystem::path& png, const torch::Tensor& grid) {
  // grid [N, M, 2, 1, 1]: one color per code column
  const auto m = grid.size(1);
  std::vector<Series> series;
  std::ofstream csv(std::filesystem::path(png).replace_extension(".csv"));
  csv << "input,code,x,y\n";
  for (std::int64_t j = 0; j < m; ++j) {
    Series s;
    auto h = torch::tensor({static_cast<float>(j) / static_cast<float>(m)});
    auto rgb = ((hue_to_rgb(h)[0] + 1.0) * 127.5).clamp(0, 255);
    s.color = {static_cast<unsigned char>(rgb[0].item<float>()), static_cast<unsigned char>(rgb[1].item<float>()),
               static_cast<unsigned char>(rgb[2].item<float>())};
    for (std::int64_t i = 0; i < grid.size(0); ++i) {
      const double x = grid[i][j][0][0][0].item<double>();
      const double y = grid[i][j][1][0][0].item<double>();
      s.x.push_back(x);
      s.y.push_back(y);
      csv << i << ',' << j << ',' << x << ',' << y << '\n';
    }
    series.push_back(std::move(s));
  }
  write_scatter_plot(png, series);
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& resume, const std::string& out_override) {
  auto config = load_config(config_path, overrides);
  auto data = load_data(config);
  print_warnings(data.warnings);
  const auto dir = out_override.empty() ? run_directory(config) : std::filesystem::path(out_override);
  std::filesystem::create_directories(dir);
  const auto snapshot = to_ini(config);
  write_text(dir / "config.ini", snapshot);
  TrainOptions options{.out_dir = dir, .checkpoint_metadata = snapshot};
  if (!resume.empty()) options.resume_from = resume;
  auto result = train(config.train, data.train, options);
  std::cout << "run directory: " << dir.string() << "\nfinal step: " << result.state.step << '\n';
  return kExitOk;
}

int cmd_eval(const std::string& ckpt, const std::string& config_path, const std::vector<std::string>& overrides,
             const std::string& out) {
  auto ctx = open_checkpoint(ckpt, config_path, overrides);
  auto data = load_data(ctx.config);
  print_warnings(data.warnings);
  auto result = evaluate(inference_fn(ctx.checkpoint.state), data.train.target, data.test.source,
                         ctx.config.train.spec.z_dim, ctx.config.metrics);
  print_warnings(result.warnings);
  const auto path = out.empty() ? std::filesystem::path(ckpt).parent_path().parent_path() / "metrics.json"
                                : std::filesystem::path(out);
  write_text(path, to_json(result.reports) + "\n");
  for (const auto& r : result.reports) std::cout << r.metric << " = " << r.value << '\n';
  std::cout << "wrote " << path.string() << '\n';
  return kExitOk;
}

int cmd_sample(const std::string& ckpt, const std::string& config_path, const std::vector<std::string>& overrides,
               const std::vector<std::string>& inputs, std::int64_t n_inputs, std::int64_t n_codes,
               std::uint64_t seed, const std::string& out) {
  if (n_codes < 1) throw ArgumentError("--n-codes must be >= 1");
  auto ctx = open_checkpoint(ckpt, config_path, overrides);
  auto a = choose_inputs(ctx, inputs, n_inputs);
  auto codes = sample_latent(n_codes, ctx.config.train.spec.z_dim, seed);
  auto grid = sample(ctx.checkpoint.state, a, codes);
  if (ctx.config.train.spec.image_size == 1) {
    write_point_samples(out, grid);
  } else {
    auto tiles = grid.reshape({-1, grid.size(2), grid.size(3), grid.size(4)});
    write_png(out, to_rgb8(make_grid(tiles, grid.size(0), grid.size(1))));
  }
  std::cout << "wrote " << grid.size(0) << "x" << grid.size(1) << " grid to " << out << '\n';
  return kExitOk;
}

int cmd_interpolate(const std::string& ckpt, const std::string& config_path,
                    const std::vector<std::string>& overrides, const std::vector<std::string>& inputs,
                    std::int64_t n_inputs, std::int64_t n_steps, std::uint64_t seed, const std::string& out) {
  if (n_steps < 2) throw ArgumentError("--steps must be >= 2");
  auto ctx = open_checkpoint(ckpt, config_path, overrides);
  if (ctx.config.train.spec.image_size == 1) throw ArgumentError("interpolate needs an image model");
  auto a = choose_inputs(ctx, inputs, n_inputs);
  auto ends = sample_latent(2, ctx.config.train.spec.z_dim, seed);
  std::vector<torch::Tensor> rows;
  for (std::int64_t i = 0; i < a.size(0); ++i) {
    rows.push_back(interpolate(ctx.checkpoint.state, a[i], ends[0], ends[1], n_steps));
  }
  auto strip = torch::cat(rows, 0);
  write_png(out, to_rgb8(make_grid(strip, a.size(0), n_steps)));
  std::cout << "wrote " << a.size(0) << " rows of " << n_steps << " frames to " << out << '\n';
  return kExitOk;
}

int cmd_mi_bench(const MiBenchOptions& options, const std::string& out_dir) {
  std::filesystem::path dir = out_dir;
  if (dir.empty()) {
    const char* env = std::getenv("MIGAN_OUTPUT_ROOT");
    dir = std::filesystem::path(env != nullptr && *env != '\0' ? env : "runs") / "mi_bench";
  }
  std::filesystem::create_directories(dir);
  auto rows = run_mi_bench(options);
  write_mi_bench_csv(dir / "mi_bench.csv", rows);
  write_mi_bench_plot(dir / "mi_bench.png", rows);
  std::cout << "wrote " << rows.size() << " estimator runs to " << (dir / "mi_bench.csv").string() << '\n';
  return kExitOk;
}

int cmd_plot(const std::string& csv, const std::vector<std::string>& columns, const std::vector<double>& refs,
             const std::string& out) {
  static const std::vector<std::array<unsigned char, 3>> palette{
      {31, 119, 180}, {214, 39, 40}, {44, 160, 44}, {148, 103, 189}, {255, 127, 14}};
  std::vector<Series> series;
  for (std::size_t i = 0; i < columns.size(); ++i) {
    auto s = read_csv_series(csv, columns[i]);
    s.color = palette[i % palette.size()];
    series.push_back(std::move(s));
  }
  write_line_plot(out, series, {.reference_y = refs});
  std::cout << "wrote " << out << '\n';
  return kExitOk;
}

}  // namespace

std::vector<MiBenchRow> run_mi_bench(const MiBenchOptions& options) {
  if (options.seeds.empty() || options.rhos.empty()) throw ArgumentError("mi-bench needs rhos and seeds");
  for (double rho : options.rhos) GaussianOracleSpec{rho, options.dim}.validate();
  std::vector<MiBenchRow> rows;
  for (double rho : options.rhos) {
    const GaussianOracleSpec spec{rho, options.dim};
    for (auto seed : options.seeds) {
      for (auto objective : {EstimatorObjective::jsd, EstimatorObjective::dv}) {
        const bool jsd = objective == EstimatorObjective::jsd;
        const auto run_seed = derive_seed(seed, jsd ? 11 : 12);
        auto critic = build_mlp_critic(options.dim, options.dim, options.hidden, run_seed);
        EstimatorTrainOptions train_options{.steps = options.steps, .lr = options.lr, .objective = objective};
        train_estimator(*critic, gaussian_pair_source(spec, options.batch, derive_seed(run_seed, 1)),
                        train_options);
        torch::NoGradGuard no_grad;
        auto [pos, neg] = gaussian_pairs(spec, options.eval_batch, derive_seed(run_seed, 2));
        const auto estimate = jsd ? jsd_mi_estimate(*critic, pos, neg) : dv_mi_estimate(*critic, pos, neg);
        rows.push_back({rho, seed, jsd ? "jsd" : "dv", estimate.item<double>(), spec.analytic_mi()});
      }
    }
  }
  return rows;
}

void write_mi_bench_csv(const std::filesystem::path& path, const std::vector<MiBenchRow>& rows) {
  std::ofstream out(path);
  out << "rho,seed,estimator,estimate,analytic_mi\n";
  out.precision(9);
  for (const auto& r : rows) {
    out << r.rho << ',' << r.seed << ',' << r.estimator << ',' << r.estimate << ',' << r.analytic_mi << '\n';
  }
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

void write_mi_bench_plot(const std::filesystem::path& path, const std::vector<MiBenchRow>& rows) {
  std::map<double, std::map<std::string, std::pair<double, int>>> by_rho;
  std::map<double, double> analytic;
  for (const auto& r : rows) {
    auto& acc = by_rho[r.rho][r.estimator];
    acc.first += r.estimate;
    acc.second += 1;
    analytic[r.rho] = r.analytic_mi;
  }
  Series jsd{.color = {31, 119, 180}, .markers = true};
  Series dv{.color = {214, 39, 40}, .markers = true};
  Series exact{.color = {60, 60, 60}};
  for (const auto& [rho, est] : by_rho) {
    for (auto* s : {&jsd, &dv}) {
      const auto& key = s == &jsd ? "jsd" : "dv";
      if (auto it = est.find(key); it != est.end()) {
        s->x.push_back(rho);
        s->y.push_back(it->second.first / it->second.second);
      }
    }
    exact.x.push_back(rho);
    exact.y.push_back(analytic[rho]);
  }
  write_line_plot(path, {exact, jsd, dv}, {.reference_y = {0.0, -2.0 * std::log(2.0)}});
}

int run(int argc, const char* const* argv) {
  CLI::App app{"Mutual-information regularized conditional GAN toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string checkpoint;
  std::string out;
  std::string resume;
  std::vector<std::string> inputs;
  std::int64_t n_inputs = 4;
  std::int64_t n_codes = 5;
  std::int64_t n_steps = 10;
  std::uint64_t seed = 0;

  auto* train_cmd = app.add_subcommand("train", "Train a model from a config file");
  train_cmd->add_option("-c,--config", config_path, "INI config")->required();
  train_cmd->add_option("--set", overrides, "section.key=value override")->take_all();
  train_cmd->add_option("--resume", resume, "checkpoint to continue from");
  train_cmd->add_option("-o,--out", out, "run directory (default: <output root>/<run.name>)");

  auto* eval_cmd = app.add_subcommand("eval", "FID proxy, NDB, JSD and diversity of a checkpoint");
  eval_cmd->add_option("checkpoint", checkpoint)->required();
  eval_cmd->add_option("-c,--config", config_path, "config (default: snapshot stored in the checkpoint)");
  eval_cmd->add_option("--set", overrides)->take_all();
  eval_cmd->add_option("-o,--out", out, "report path (default: <run dir>/metrics.json)");

  auto add_generation = [&](CLI::App* cmd) {
    cmd->add_option("checkpoint", checkpoint)->required();
    cmd->add_option("-c,--config", config_path);
    cmd->add_option("--set", overrides)->take_all();
    cmd->add_option("-i,--inputs", inputs, "PNG files or directories (default: held-out inputs)");
    cmd->add_option("--n-inputs", n_inputs, "held-out inputs to use when --inputs is absent");
    cmd->add_option("--seed", seed);
    cmd->add_option("-o,--out", out)->required();
  };
  auto* sample_cmd = app.add_subcommand("sample", "Grid of inputs x latent codes");
  add_generation(sample_cmd);
  sample_cmd->add_option("--n-codes", n_codes);
  auto* interp_cmd = app.add_subcommand("interpolate", "Linear latent interpolation strips");
  add_generation(interp_cmd);
  interp_cmd->add_option("--steps", n_steps);

  MiBenchOptions bench;
  auto* bench_cmd = app.add_subcommand("mi-bench", "JSD and DV estimators on correlated Gaussians");
  bench_cmd->add_option("--rhos", bench.rhos)->delimiter(',');
  bench_cmd->add_option("--seeds", bench.seeds)->delimiter(',');
  bench_cmd->add_option("--steps", bench.steps);
  bench_cmd->add_option("--batch", bench.batch);
  bench_cmd->add_option("--dim", bench.dim);
  bench_cmd->add_option("-o,--out", out, "output directory");

  std::string csv;
  std::vector<std::string> columns;
  std::vector<double> refs;
  auto* plot_cmd = app.add_subcommand("plot", "Line plot of CSV columns against the first column");
  plot_cmd->add_option("csv", csv)->required();
  plot_cmd->add_option("--column", columns)->required();
  plot_cmd->add_option("--reference", refs, "horizontal reference lines");
  plot_cmd->add_option("-o,--out", out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(config_path, overrides, resume, out);
    if (*eval_cmd) return cmd_eval(checkpoint, config_path, overrides, out);
    if (*sample_cmd) return cmd_sample(checkpoint, config_path, overrides, inputs, n_inputs, n_codes, seed, out);
    if (*interp_cmd) {
      return cmd_interpolate(checkpoint, config_path, overrides, inputs, n_inputs, n_steps, seed, out);
    }
    if (*bench_cmd) return cmd_mi_bench(bench, out);
    if (*plot_cmd) return cmd_plot(csv, columns, refs, out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DatasetError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ArgumentError& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return kExitUsage;
  } catch (const TrainingError& e) {
    std::cerr << "training aborted: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace migan::cli
