#include "migan/training.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "json.hpp"

#include "migan/errors.hpp"
#include "migan/image_io.hpp"
#include "migan/mi_core.hpp"
#include "migan/plot.hpp"

namespace migan {

namespace {

using nlohmann::json;

enum SeedStream : std::uint64_t {
  kGeneratorInit = 1,
  kDiscriminatorInit = 2,
  kCriticInit = 3,
  kEncoderInit = 4,
  kSampling = 5,
  kDataOrder = 6,
  kProbe = 7,
};

std::unique_ptr<torch::optim::Adam> make_adam(torch::nn::Module& module, const TrainConfig& config) {
  return std::make_unique<torch::optim::Adam>(
      module.parameters(),
      torch::optim::AdamOptions(config.lr).betas({config.beta1, config.beta2}));
}

json spec_json(const NetworkSpec& s) {
  return {{"image_size", s.image_size},
          {"image_channels", s.image_channels},
          {"z_dim", s.z_dim},
          {"base_width", s.base_width},
          {"n_discriminator_scales", s.n_discriminator_scales},
          {"arch", to_string(s.arch)},
          {"mlp_hidden", s.mlp_hidden}};
}

NetworkSpec spec_from(const json& j) {
  NetworkSpec s;
  s.image_size = j.at("image_size").get<std::int64_t>();
  s.image_channels = j.at("image_channels").get<std::int64_t>();
  s.z_dim = j.at("z_dim").get<std::int64_t>();
  s.base_width = j.at("base_width").get<std::int64_t>();
  s.n_discriminator_scales = j.at("n_discriminator_scales").get<std::int64_t>();
  s.arch = parse_architecture(j.at("arch").get<std::string>());
  s.mlp_hidden = j.at("mlp_hidden").get<std::int64_t>();
  return s;
}

json config_json(const TrainConfig& c) {
  return {{"mode", to_string(c.mode)},
          {"batch_size", c.batch_size},
          {"steps", c.steps},
          {"lr", c.lr},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"weights",
           {{"lambda_mi", c.weights.lambda_mi},
            {"lambda_l1", c.weights.lambda_l1},
            {"lambda_gc", c.weights.lambda_gc},
            {"lambda_latent_rec", c.weights.lambda_latent_rec}}},
          {"spec", spec_json(c.spec)},
          {"seed", c.seed},
          {"checkpoint_every", c.checkpoint_every},
          {"log_every", c.log_every},
          {"sample_every", c.sample_every},
          {"gc_transform", to_string(c.gc_transform)}};
}

TrainConfig config_from(const json& j) {
  TrainConfig c;
  c.mode = parse_dataset_mode(j.at("mode").get<std::string>());
  c.batch_size = j.at("batch_size").get<std::int64_t>();
  c.steps = j.at("steps").get<std::int64_t>();
  c.lr = j.at("lr").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  const auto& w = j.at("weights");
  c.weights.lambda_mi = w.at("lambda_mi").get<double>();
  c.weights.lambda_l1 = w.at("lambda_l1").get<double>();
  c.weights.lambda_gc = w.at("lambda_gc").get<double>();
  c.weights.lambda_latent_rec = w.at("lambda_latent_rec").get<double>();
  c.spec = spec_from(j.at("spec"));
  c.seed = j.at("seed").get<std::uint64_t>();
  c.checkpoint_every = j.at("checkpoint_every").get<std::int64_t>();
  c.log_every = j.at("log_every").get<std::int64_t>();
  c.sample_every = j.at("sample_every").get<std::int64_t>();
  c.gc_transform = parse_transform(j.at("gc_transform").get<std::string>());
  return c;
}

std::string format_components(const StepResult& r) {
  std::ostringstream os;
  os << "d_loss=" << r.d_loss << " g_loss=" << r.g_loss << " l1=" << r.l1 << " gc=" << r.gc
     << " mi=" << r.mi << " latent_rec=" << r.latent_rec;
  return os.str();
}

void check_finite(double value, const char* name, std::int64_t step, const StepResult& partial) {
  if (!std::isfinite(value)) {
    throw TrainingError(std::string("non-finite ") + name + " [" + format_components(partial) + "]", step);
  }
}

torch::Tensor generate_single(Generator& g, const torch::Tensor& a, const torch::Tensor& z) {
  return g.forward(a.unsqueeze(0), z.unsqueeze(0)).squeeze(0);
}

void write_sample_artifact(const std::filesystem::path& path, TrainState& state,
                           const Dataset& dataset, std::uint64_t seed) {
  torch::NoGradGuard no_grad;
  const auto& spec = state.spec;
  if (spec.arch == Architecture::mlp && spec.image_size == 1 && spec.image_channels == 2) {
    // point datasets: generated vs target scatter
    const auto n = std::min<std::int64_t>(512, dataset.source_count());
    auto codes = sample_latent(n, spec.z_dim, derive_seed(seed, kProbe));
    auto fake = state.generator->forward(dataset.source.slice(0, 0, n), codes).reshape({n, 2});
    auto real = dataset.target.slice(0, 0, n).reshape({n, 2});
    Series r;
    Series f;
    for (std::int64_t i = 0; i < n; ++i) {
      r.x.push_back(real[i][0].item<double>());
      r.y.push_back(real[i][1].item<double>());
      f.x.push_back(fake[i][0].item<double>());
      f.y.push_back(fake[i][1].item<double>());
    }
    r.color = {31, 119, 180};
    f.color = {214, 39, 40};
    write_scatter_plot(path, {r, f});
    return;
  }
  const auto n_inputs = std::min<std::int64_t>(4, dataset.source_count());
  auto inputs = dataset.source.slice(0, 0, n_inputs);
  auto codes = sample_latent(5, spec.z_dim, derive_seed(seed, kProbe));
  auto grid = sample(state, inputs, codes);
  // leading column shows the inputs
  auto with_inputs = torch::cat({inputs.unsqueeze(1), grid}, 1);
  auto tiles = with_inputs.reshape({-1, grid.size(2), grid.size(3), grid.size(4)});
  write_png(path, to_rgb8(make_grid(tiles, n_inputs, 6)));
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 2) throw ArgumentError("batch_size must be >= 2");
  if (steps < 1) throw ArgumentError("steps must be >= 1");
  if (!(lr > 0.0)) throw ArgumentError("lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw ArgumentError("Adam betas must lie in [0, 1)");
  }
  if (checkpoint_every < 0 || log_every < 0 || sample_every < 0) {
    throw ArgumentError("checkpoint/log/sample intervals must be non-negative");
  }
  weights.validate();
  spec.validate();
}

TrainState make_train_state(const TrainConfig& config) {
  config.validate();
  TrainState state{.spec = config.spec,
                   .rng = at::make_generator<at::CPUGeneratorImpl>(derive_seed(config.seed, kSampling))};
  state.generator = build_generator(config.spec, derive_seed(config.seed, kGeneratorInit));
  state.discriminator = build_discriminator(config.spec, derive_seed(config.seed, kDiscriminatorInit));
  state.critic = build_statistics_network(config.spec, derive_seed(config.seed, kCriticInit));
  state.generator_opt = make_adam(*state.generator, config);
  state.discriminator_opt = make_adam(*state.discriminator, config);
  state.critic_opt = make_adam(*state.critic, config);
  if (config.weights.lambda_latent_rec > 0.0) {
    state.encoder = build_encoder(config.spec, derive_seed(config.seed, kEncoderInit));
    state.encoder_opt = make_adam(*state.encoder, config);
  }
  return state;
}

StepResult train_step(TrainState& state, const Batch& batch, const TrainConfig& config) {
  const auto& w = config.weights;
  auto& G = *state.generator;
  auto& D = *state.discriminator;
  auto& T = *state.critic;
  StepResult r;
  r.step = state.step;

  const auto n = batch.source.size(0);
  if (batch.target.size(0) != n && config.mode == DatasetMode::paired) {
    throw ArgumentError("paired batch must be aligned");
  }
  auto z = sample_latent(n, config.spec.z_dim, state.rng);
  auto fake = G.forward(batch.source, z);

  // discriminator update; fake is detached inside discriminator_loss
  state.discriminator_opt->zero_grad();
  auto d_loss = discriminator_loss(D, batch.target, fake);
  r.d_loss = d_loss.item<double>();
  check_finite(r.d_loss, "discriminator loss", state.step, r);
  d_loss.backward();
  state.discriminator_opt->step();

  // joint generator + statistics network update
  state.generator_opt->zero_grad();
  state.critic_opt->zero_grad();
  if (state.encoder_opt) state.encoder_opt->zero_grad();

  std::map<std::string, torch::Tensor> components;
  components["adv"] = generator_adversarial_loss(D, fake);
  if (config.mode == DatasetMode::paired && w.lambda_l1 > 0.0) {
    components["l1"] = migan::l1_loss(fake, batch.target);
  }
  if (config.mode == DatasetMode::unpaired && w.lambda_gc > 0.0) {
    auto transformed = G.forward(apply_transform(config.gc_transform, batch.source), z);
    components["gc"] = migan::l1_loss(apply_transform(config.gc_transform, fake), transformed);
  }
  auto mi = mi_loss(T, fake, z,
                    regenerating_negative_sampler(
                        [&G](const torch::Tensor& a, const torch::Tensor& c) { return G.forward(a, c); },
                        batch.source, state.rng));
  components["mi"] = mi;
  if (state.encoder && w.lambda_latent_rec > 0.0) {
    auto& E = *state.encoder;
    components["latent_rec"] = latent_reconstruction_loss(
        [&E](const torch::Tensor& x) { return E.forward(x); }, fake, z);
  }

  auto value_of = [&](const char* name) {
    auto it = components.find(name);
    return it == components.end() ? 0.0 : it->second.item<double>();
  };
  r.g_loss = value_of("adv");
  r.l1 = value_of("l1");
  r.gc = value_of("gc");
  r.mi = value_of("mi");
  r.latent_rec = value_of("latent_rec");
  r.mi_estimate = -r.mi;

  torch::Tensor total;
  try {
    total = total_loss(w, components, state.step);
  } catch (const TrainingError& e) {
    throw TrainingError(std::string(e.what()) + " [" + format_components(r) + "]", state.step);
  }
  r.total = total.item<double>();

  auto critic_params = T.parameters();
  auto critic_grads = torch::autograd::grad({mi}, critic_params, {}, /*retain_graph=*/true,
                                            /*create_graph=*/false, /*allow_unused=*/true);
  total.backward();
  {
    torch::NoGradGuard no_grad;
    for (std::size_t i = 0; i < critic_params.size(); ++i) {
      if (critic_grads[i].defined()) {
        critic_params[i].mutable_grad() = critic_grads[i];
      } else if (critic_params[i].grad().defined()) {
        critic_params[i].mutable_grad().zero_();
      }
    }
  }
  state.generator_opt->step();
  state.critic_opt->step();
  if (state.encoder_opt) state.encoder_opt->step();

  ++state.step;
  return r;
}

TrainResult train(const TrainConfig& config, const Dataset& dataset, const TrainOptions& options) {
  config.validate();
  if (dataset.mode != config.mode) {
    throw ArgumentError("dataset mode " + to_string(dataset.mode) + " does not match training mode " +
                        to_string(config.mode));
  }
  if (dataset.source.size(1) != config.spec.image_channels ||
      dataset.source.size(2) != config.spec.image_size) {
    throw ArgumentError("dataset images do not match the network spec");
  }

  TrainResult result;
  if (options.resume_from) {
    auto loaded = load_checkpoint(*options.resume_from, config.spec);
    result.state = std::move(loaded.state);
  } else {
    result.state = make_train_state(config);
  }
  auto& state = result.state;

  BatchIterator batches(dataset, config.batch_size, derive_seed(config.seed, kDataOrder));
  batches.restore(state.data_state);

  const bool write_files = !options.out_dir.empty();
  std::ofstream losses;
  std::ofstream mi_trace;
  std::filesystem::path ckpt_dir;
  if (write_files) {
    std::filesystem::create_directories(options.out_dir);
    ckpt_dir = options.out_dir / "checkpoints";
    std::filesystem::create_directories(ckpt_dir);
    const auto mode = options.resume_from ? std::ios::app : std::ios::trunc;
    losses.open(options.out_dir / "losses.csv", std::ios::out | mode);
    mi_trace.open(options.out_dir / "mi_trace.csv", std::ios::out | mode);
    if (!losses || !mi_trace) {
      throw std::runtime_error("cannot write traces under " + options.out_dir.string());
    }
    if (!options.resume_from) {
      losses << "step,d_loss,g_loss,l1,gc,mi,total\n";
      mi_trace << "step,estimate\n";
    }
    losses << std::setprecision(9);
    mi_trace << std::setprecision(9);
  }

  while (state.step < config.steps) {
    auto batch = batches.next();
    auto r = train_step(state, batch, config);
    state.data_state = batches.state();
    result.trace.push_back(r);
    if (options.on_step) options.on_step(r);

    const auto done = state.step;
    if (write_files) {
      losses << r.step << ',' << r.d_loss << ',' << r.g_loss << ',' << r.l1 << ',' << r.gc << ','
             << r.mi << ',' << r.total << '\n';
      mi_trace << r.step << ',' << r.mi_estimate << '\n';
      if (!losses || !mi_trace) throw std::runtime_error("trace write failed");
      if (config.sample_every > 0 && done % config.sample_every == 0) {
        write_sample_artifact(options.out_dir / ("step" + std::to_string(done) + "_grid.png"), state,
                              dataset, config.seed);
      }
      if (config.checkpoint_every > 0 && done % config.checkpoint_every == 0) {
        save_checkpoint(ckpt_dir / ("step" + std::to_string(done) + ".ckpt"), state, config,
                        options.checkpoint_metadata);
      }
    }
    if (config.log_every > 0 && done % config.log_every == 0) {
      std::cout << "step " << done << "/" << config.steps << " d=" << r.d_loss << " g=" << r.g_loss
                << " l1=" << r.l1 << " gc=" << r.gc << " mi_est=" << r.mi_estimate << std::endl;
    }
  }
  if (write_files) {
    losses.flush();
    mi_trace.flush();
    save_checkpoint(ckpt_dir / "final.ckpt", state, config, options.checkpoint_metadata);
  }
  return result;
}

torch::Tensor sample(TrainState& state, const torch::Tensor& inputs, const torch::Tensor& codes) {
  if (inputs.dim() != 4 || codes.dim() != 2 || codes.size(1) != state.spec.z_dim) {
    throw ArgumentError("sample expects inputs [N,C,H,W] and codes [M,z_dim]");
  }
  const auto n = inputs.size(0);
  const auto m = codes.size(0);
  constexpr std::int64_t kMaxGrid = 4096;
  if (n < 1 || m < 1 || n * m > kMaxGrid) {
    throw ArgumentError("sample grid of " + std::to_string(n) + "x" + std::to_string(m) +
                        " is empty or exceeds " + std::to_string(kMaxGrid) + " images");
  }
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> rows;
  for (std::int64_t i = 0; i < n; ++i) {
    std::vector<torch::Tensor> row;
    for (std::int64_t j = 0; j < m; ++j) row.push_back(generate_single(*state.generator, inputs[i], codes[j]));
    rows.push_back(torch::stack(row));
  }
  return torch::stack(rows);
}

torch::Tensor interpolate(TrainState& state, const torch::Tensor& input, const torch::Tensor& z1,
                          const torch::Tensor& z2, std::int64_t n) {
  if (n < 2) throw ArgumentError("interpolate requires n >= 2");
  auto a = input.dim() == 4 ? input.squeeze(0) : input;
  auto c1 = z1.reshape({-1});
  auto c2 = z2.reshape({-1});
  if (c1.size(0) != state.spec.z_dim || c2.size(0) != state.spec.z_dim) {
    throw ArgumentError("interpolation endpoints must have z_dim entries");
  }
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> frames;
  for (std::int64_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(n - 1);
    // t = 0 and t = 1 reproduce the endpoint codes exactly
    auto z = (1.0 - t) * c1 + t * c2;
    frames.push_back(generate_single(*state.generator, a, z));
  }
  return torch::stack(frames);
}

GenerateFn inference_fn(TrainState& state) {
  auto g = state.generator;
  return [g](const torch::Tensor& a, const torch::Tensor& z) {
    torch::NoGradGuard no_grad;
    return g->forward(a, z);
  };
}

ColumnVariance column_style_variance(const torch::Tensor& grid, const torch::Tensor& masks) {
  if (grid.dim() != 5) throw ArgumentError("column_style_variance expects [N, M, C, H, W]");
  const auto n = grid.size(0);
  const auto m = grid.size(1);
  auto flat = grid.reshape({n * m, grid.size(2), grid.size(3), grid.size(4)});
  auto mask_rep = masks.unsqueeze(1).expand({n, m, -1, -1, -1}).reshape(
      {n * m, masks.size(1), masks.size(2), masks.size(3)});
  auto chroma = chroma_statistic(flat, mask_rep).reshape({n, m, 2});
  auto column_mean = chroma.mean(0);                                 // [M, 2]
  auto within = (chroma - column_mean.unsqueeze(0)).pow(2).sum(2).mean();
  auto across = (column_mean - column_mean.mean(0)).pow(2).sum(1).mean();
  return {within.item<double>(), across.item<double>()};
}

// --- checkpoints -----------------------------------------------------------------

std::string spec_to_json(const NetworkSpec& spec) { return spec_json(spec).dump(); }

NetworkSpec spec_from_json(const std::string& text) { return spec_from(json::parse(text)); }

void save_checkpoint(const std::filesystem::path& path, const TrainState& state,
                     const TrainConfig& config, const std::string& metadata) {
  json header{{"format", "migan-checkpoint"},
              {"version", 1},
              {"spec", spec_json(state.spec)},
              {"config", config_json(config)},
              {"metadata", metadata}};
  torch::serialize::OutputArchive archive;
  archive.write("header", c10::IValue(header.dump()));
  archive.write("step", c10::IValue(state.step));

  auto write_module = [&](const char* key, const torch::nn::Module& module) {
    torch::serialize::OutputArchive sub;
    module.save(sub);
    archive.write(key, sub);
  };
  auto write_opt = [&](const char* key, const torch::optim::Optimizer& opt) {
    torch::serialize::OutputArchive sub;
    opt.save(sub);
    archive.write(key, sub);
  };
  write_module("generator", *state.generator);
  write_module("discriminator", *state.discriminator);
  write_module("critic", *state.critic);
  write_opt("generator_opt", *state.generator_opt);
  write_opt("discriminator_opt", *state.discriminator_opt);
  write_opt("critic_opt", *state.critic_opt);
  if (state.encoder) {
    write_module("encoder", *state.encoder);
    write_opt("encoder_opt", *state.encoder_opt);
  }
  auto rng = state.rng;
  archive.write("rng_state", rng.get_state());
  const auto& d = state.data_state;
  archive.write("data_state", torch::tensor({d.source_epoch, d.source_cursor, d.target_epoch, d.target_cursor},
                                            torch::kInt64));
  const auto tmp = path.string() + ".tmp";
  try {
    archive.save_to(tmp);
  } catch (const c10::Error& e) {
    throw std::runtime_error("failed to write checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 const std::optional<NetworkSpec>& expected) {
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(path.string());
  } catch (const c10::Error& e) {
    throw CheckpointError("cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  c10::IValue header_value;
  if (!archive.try_read("header", header_value) || !header_value.isString()) {
    throw CheckpointError(path.string() + " has no checkpoint header");
  }
  json header;
  try {
    header = json::parse(header_value.toStringRef());
  } catch (const json::exception& e) {
    throw CheckpointError("corrupt checkpoint header in " + path.string() + ": " + e.what());
  }
  if (header.value("format", "") != "migan-checkpoint") {
    throw CheckpointError(path.string() + " is not a migan checkpoint");
  }

  LoadedCheckpoint out;
  out.config = config_from(header.at("config"));
  out.config.spec = spec_from(header.at("spec"));
  out.metadata = header.value("metadata", "");
  if (expected && !(*expected == out.config.spec)) {
    throw CheckpointError("checkpoint spec " + spec_json(out.config.spec).dump() +
                          " does not match expected " + spec_json(*expected).dump());
  }

  out.state = make_train_state(out.config);
  auto& state = out.state;
  auto read_module = [&](const char* key, torch::nn::Module& module) {
    torch::serialize::InputArchive sub;
    if (!archive.try_read(key, sub)) throw CheckpointError(std::string("checkpoint lacks ") + key);
    module.load(sub);
  };
  auto read_opt = [&](const char* key, torch::optim::Optimizer& opt) {
    torch::serialize::InputArchive sub;
    if (!archive.try_read(key, sub)) throw CheckpointError(std::string("checkpoint lacks ") + key);
    opt.load(sub);
  };
  try {
    read_module("generator", *state.generator);
    read_module("discriminator", *state.discriminator);
    read_module("critic", *state.critic);
    read_opt("generator_opt", *state.generator_opt);
    read_opt("discriminator_opt", *state.discriminator_opt);
    read_opt("critic_opt", *state.critic_opt);
    if (state.encoder) {
      read_module("encoder", *state.encoder);
      read_opt("encoder_opt", *state.encoder_opt);
    }
    c10::IValue step;
    archive.read("step", step);
    state.step = step.toInt();
    torch::Tensor rng_state;
    archive.read("rng_state", rng_state);
    state.rng.set_state(rng_state);
    torch::Tensor data_state;
    archive.read("data_state", data_state);
    state.data_state = {data_state[0].item<std::int64_t>(), data_state[1].item<std::int64_t>(),
                        data_state[2].item<std::int64_t>(), data_state[3].item<std::int64_t>()};
  } catch (const c10::Error& e) {
    throw CheckpointError("checkpoint " + path.string() + " is incompatible: " + e.what_without_backtrace());
  }
  return out;
}

}  // namespace migan
