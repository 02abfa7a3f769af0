#include "migan_cli/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "migan/errors.hpp"

namespace migan::cli {

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ConfigError(key + ": cannot parse '" + text + "' as a number");
  }
  return value;
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

Field int_field(std::string key, std::function<std::int64_t&(RunConfig&)> ref) {
  return {key, [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); },
          [ref, key](RunConfig& c, const std::string& v) { ref(c) = parse_number<std::int64_t>(key, v); }};
}

Field seed_field(std::string key, std::function<std::uint64_t&(RunConfig&)> ref) {
  return {key, [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); },
          [ref, key](RunConfig& c, const std::string& v) { ref(c) = parse_number<std::uint64_t>(key, v); }};
}

Field real_field(std::string key, std::function<double&(RunConfig&)> ref) {
  return {key, [ref](const RunConfig& c) { return format_double(ref(const_cast<RunConfig&>(c))); },
          [ref, key](RunConfig& c, const std::string& v) { ref(c) = parse_number<double>(key, v); }};
}

Field text_field(std::string key, std::function<std::string&(RunConfig&)> ref) {
  return {key, [ref](const RunConfig& c) { return ref(const_cast<RunConfig&>(c)); },
          [ref](RunConfig& c, const std::string& v) { ref(c) = v; }};
}

Field path_field(std::string key, std::function<std::filesystem::path&(RunConfig&)> ref) {
  return {key, [ref](const RunConfig& c) { return ref(const_cast<RunConfig&>(c)).string(); },
          [ref](RunConfig& c, const std::string& v) { ref(c) = v; }};
}

template <typename Parse, typename Print, typename Ref>
Field enum_field(std::string key, Ref ref, Parse parse, Print print) {
  return {key, [ref, print](const RunConfig& c) { return print(ref(const_cast<RunConfig&>(c))); },
          [ref, parse, key](RunConfig& c, const std::string& v) {
            try {
              ref(c) = parse(v);
            } catch (const std::exception& e) {
              throw ConfigError(key + ": " + e.what());
            }
          }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(text_field("run.name", [](RunConfig& c) -> std::string& { return c.name; }));
    f.push_back(path_field("run.output_root", [](RunConfig& c) -> std::filesystem::path& { return c.output_root; }));
    f.push_back(seed_field("run.seed", [](RunConfig& c) -> std::uint64_t& { return c.train.seed; }));

    f.push_back(enum_field(
        "train.mode", [](RunConfig& c) -> DatasetMode& { return c.train.mode; },
        [](const std::string& v) { return parse_dataset_mode(v); },
        [](DatasetMode m) { return to_string(m); }));
    f.push_back(int_field("train.batch_size", [](RunConfig& c) -> std::int64_t& { return c.train.batch_size; }));
    f.push_back(int_field("train.steps", [](RunConfig& c) -> std::int64_t& { return c.train.steps; }));
    f.push_back(real_field("train.lr", [](RunConfig& c) -> double& { return c.train.lr; }));
    f.push_back(real_field("train.beta1", [](RunConfig& c) -> double& { return c.train.beta1; }));
    f.push_back(real_field("train.beta2", [](RunConfig& c) -> double& { return c.train.beta2; }));
    f.push_back(int_field("train.checkpoint_every", [](RunConfig& c) -> std::int64_t& { return c.train.checkpoint_every; }));
    f.push_back(int_field("train.log_every", [](RunConfig& c) -> std::int64_t& { return c.train.log_every; }));
    f.push_back(int_field("train.sample_every", [](RunConfig& c) -> std::int64_t& { return c.train.sample_every; }));

    f.push_back(real_field("weights.lambda_mi", [](RunConfig& c) -> double& { return c.train.weights.lambda_mi; }));
    f.push_back(real_field("weights.lambda_l1", [](RunConfig& c) -> double& { return c.train.weights.lambda_l1; }));
    f.push_back(real_field("weights.lambda_gc", [](RunConfig& c) -> double& { return c.train.weights.lambda_gc; }));
    f.push_back(real_field("weights.lambda_latent_rec",
                           [](RunConfig& c) -> double& { return c.train.weights.lambda_latent_rec; }));

    f.push_back(int_field("network.image_size", [](RunConfig& c) -> std::int64_t& { return c.train.spec.image_size; }));
    f.push_back(int_field("network.image_channels",
                          [](RunConfig& c) -> std::int64_t& { return c.train.spec.image_channels; }));
    f.push_back(int_field("network.z_dim", [](RunConfig& c) -> std::int64_t& { return c.train.spec.z_dim; }));
    f.push_back(int_field("network.base_width", [](RunConfig& c) -> std::int64_t& { return c.train.spec.base_width; }));
    f.push_back(int_field("network.discriminator_scales",
                          [](RunConfig& c) -> std::int64_t& { return c.train.spec.n_discriminator_scales; }));
    f.push_back(enum_field(
        "network.arch", [](RunConfig& c) -> Architecture& { return c.train.spec.arch; },
        [](const std::string& v) { return parse_architecture(v); },
        [](Architecture a) { return to_string(a); }));
    f.push_back(int_field("network.mlp_hidden", [](RunConfig& c) -> std::int64_t& { return c.train.spec.mlp_hidden; }));

    f.push_back(text_field("data.kind", [](RunConfig& c) -> std::string& { return c.data.kind; }));
    f.push_back(path_field("data.root", [](RunConfig& c) -> std::filesystem::path& { return c.data.root; }));
    f.push_back(path_field("data.test_root", [](RunConfig& c) -> std::filesystem::path& { return c.data.test_root; }));
    f.push_back(int_field("data.n_shapes", [](RunConfig& c) -> std::int64_t& { return c.data.n_shapes; }));
    f.push_back(text_field("data.palette", [](RunConfig& c) -> std::string& { return c.data.palette; }));
    f.push_back(int_field("data.k_colors", [](RunConfig& c) -> std::int64_t& { return c.data.k_colors; }));
    f.push_back(int_field("data.n_modes", [](RunConfig& c) -> std::int64_t& { return c.data.n_modes; }));
    f.push_back(int_field("data.n_samples", [](RunConfig& c) -> std::int64_t& { return c.data.n_samples; }));
    f.push_back(int_field("data.n_test", [](RunConfig& c) -> std::int64_t& { return c.data.n_test; }));
    f.push_back(seed_field("data.seed", [](RunConfig& c) -> std::uint64_t& { return c.data.seed; }));
    f.push_back(seed_field("data.test_seed", [](RunConfig& c) -> std::uint64_t& { return c.data.test_seed; }));

    f.push_back(int_field("metrics.k", [](RunConfig& c) -> std::int64_t& { return c.metrics.k; }));
    f.push_back(real_field("metrics.alpha", [](RunConfig& c) -> double& { return c.metrics.alpha; }));
    f.push_back(int_field("metrics.n_inputs", [](RunConfig& c) -> std::int64_t& { return c.metrics.n_inputs; }));
    f.push_back(int_field("metrics.codes_per_input",
                          [](RunConfig& c) -> std::int64_t& { return c.metrics.codes_per_input; }));
    f.push_back(int_field("metrics.pairs_per_input",
                          [](RunConfig& c) -> std::int64_t& { return c.metrics.pairs_per_input; }));
    f.push_back(seed_field("metrics.seed", [](RunConfig& c) -> std::uint64_t& { return c.metrics.seed; }));
    f.push_back(seed_field("metrics.embedder_seed", [](RunConfig& c) -> std::uint64_t& { return c.metrics.embedder_seed; }));
    f.push_back(seed_field("metrics.bin_seed", [](RunConfig& c) -> std::uint64_t& { return c.metrics.bin_seed; }));

    f.push_back(enum_field(
        "gc.transform", [](RunConfig& c) -> GeometricTransform& { return c.train.gc_transform; },
        [](const std::string& v) { return parse_transform(v); },
        [](GeometricTransform t) { return to_string(t); }));
    return f;
  }();
  return table;
}

const Field& find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return f;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

RunConfig default_config() { return RunConfig{}; }

void apply_setting(RunConfig& config, const std::string& key, const std::string& value) {
  find_field(key).set(config, value);
}

RunConfig parse_config(const std::string& ini_text, const std::vector<std::string>& overrides) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(ini_text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }
  RunConfig config = default_config();
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      throw ConfigError("unknown config key '" + section + "' (keys belong to a [section])");
    }
    for (const auto& [key, value] : body) {
      apply_setting(config, section + "." + key, value.get_value<std::string>());
    }
  }
  for (const auto& assignment : overrides) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("override '" + assignment + "' is not of the form section.key=value");
    }
    apply_setting(config, assignment.substr(0, eq), assignment.substr(eq + 1));
  }
  validate(config);
  return config;
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str(), overrides);
}

KeyValues flatten(const RunConfig& config) {
  KeyValues out;
  for (const auto& f : fields()) out.emplace_back(f.key, f.get(config));
  return out;
}

std::string to_ini(const RunConfig& config) {
  std::ostringstream os;
  std::string section;
  for (const auto& [key, value] : flatten(config)) {
    const auto dot = key.find('.');
    const auto s = key.substr(0, dot);
    if (s != section) {
      if (!section.empty()) os << '\n';
      os << '[' << s << "]\n";
      section = s;
    }
    os << key.substr(dot + 1) << " = " << value << '\n';
  }
  return os.str();
}

void validate(const RunConfig& config) {
  auto wrap = [](const std::string& section, const auto& fn) {
    try {
      fn();
    } catch (const ArgumentError& e) {
      throw ConfigError(section + ": " + e.what());
    }
  };
  if (config.name.empty()) throw ConfigError("run.name must not be empty");
  wrap("train", [&] { config.train.validate(); });
  wrap("metrics", [&] { config.metrics.validate(); });
  const auto& d = config.data;
  const auto& spec = config.train.spec;
  if (d.kind == "cond_gmm") {
    if (spec.arch != Architecture::mlp || spec.image_size != 1 || spec.image_channels != 2) {
      throw ConfigError("data.kind = cond_gmm needs network.arch = mlp, image_size = 1, image_channels = 2");
    }
    if (config.train.mode != DatasetMode::paired) throw ConfigError("train.mode: cond_gmm is paired only");
  } else if (d.kind == "shapes_colors" || d.kind == "folder") {
    if (spec.image_channels != 3) throw ConfigError("network.image_channels must be 3 for RGB data");
    if (d.kind == "folder" && d.root.empty()) throw ConfigError("data.root is required for data.kind = folder");
    if (d.kind == "shapes_colors") {
      try {
        parse_palette(d.palette);
      } catch (const std::exception& e) {
        throw ConfigError(std::string("data.palette: ") + e.what());
      }
    }
  } else {
    throw ConfigError("data.kind: expected shapes_colors, cond_gmm or folder, got '" + d.kind + "'");
  }
  if (d.n_test < 1) throw ConfigError("data.n_test must be >= 1");
}

std::filesystem::path run_directory(const RunConfig& config) {
  std::filesystem::path root = config.output_root;
  if (const char* env = std::getenv("MIGAN_OUTPUT_ROOT"); env != nullptr && *env != '\0') root = env;
  return root / config.name;
}

LoadedData load_data(const RunConfig& config) {
  LoadedData out;
  const auto& d = config.data;
  const auto& spec = config.train.spec;
  try {
    if (d.kind == "shapes_colors") {
      ShapesColorsSpec s{.n_shapes = d.n_shapes,
                         .palette = parse_palette(d.palette),
                         .k = d.k_colors,
                         .image_size = spec.image_size,
                         .mode = config.train.mode};
      out.train = make_shapes_colors(s, d.seed);
      s.n_shapes = d.n_test;
      out.test = make_shapes_colors(s, d.test_seed);
    } else if (d.kind == "cond_gmm") {
      CondGmmSpec g{.n_modes = d.n_modes, .n_samples = d.n_samples};
      out.train = make_cond_gmm(g, d.seed);
      g.n_samples = d.n_test;
      out.test = make_cond_gmm(g, d.test_seed);
    } else {
      FolderLoadReport report;
      out.train = load_image_folders(d.root, config.train.mode, spec.image_size, &report);
      if (!d.test_root.empty()) {
        out.test = load_image_folders(d.test_root, config.train.mode, spec.image_size, &report);
      } else {
        out.test = out.train;
        out.warnings.push_back("data.test_root unset; evaluating on training inputs");
      }
      out.warnings.insert(out.warnings.end(), report.warnings.begin(), report.warnings.end());
    }
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("data: ") + e.what());
  }
  return out;
}

}  // namespace migan::cli
