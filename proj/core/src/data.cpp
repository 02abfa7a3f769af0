#include "migan/data.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <set>

#include "migan/errors.hpp"
#include "migan/image_io.hpp"

namespace migan {

namespace {

using torch::indexing::Slice;

constexpr std::uint64_t kSourceStream = 0x5352433aULL;
constexpr std::uint64_t kTargetStream = 0x5447543aULL;
constexpr std::uint64_t kPairStream = 0x5041523aULL;

struct ShapeGeometry {
  bool ellipse = false;
  double cx = 0, cy = 0;
  double rx = 0, ry = 0, angle = 0;
  std::vector<std::pair<double, double>> vertices;
};

ShapeGeometry random_shape(std::mt19937_64& rng, double size) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ShapeGeometry g;
  g.ellipse = unit(rng) < 0.5;
  g.cx = size * (0.3 + 0.4 * unit(rng));
  g.cy = size * (0.3 + 0.4 * unit(rng));
  if (g.ellipse) {
    g.rx = size * (0.12 + 0.2 * unit(rng));
    g.ry = size * (0.12 + 0.2 * unit(rng));
    g.angle = std::numbers::pi * unit(rng);
  } else {
    const int n = 3 + static_cast<int>(unit(rng) * 4.0);  // 3..6 vertices
    const double radius = size * (0.18 + 0.17 * unit(rng));
    std::vector<double> angles(static_cast<std::size_t>(n));
    const double offset = 2.0 * std::numbers::pi * unit(rng);
    for (int i = 0; i < n; ++i) {
      // jittered even spacing keeps the polygon star-shaped and non-degenerate
      angles[static_cast<std::size_t>(i)] =
          offset + 2.0 * std::numbers::pi * (i + 0.3 * (unit(rng) - 0.5)) / n;
    }
    for (double a : angles) {
      const double r = radius * (0.75 + 0.25 * unit(rng));
      g.vertices.emplace_back(g.cx + r * std::cos(a), g.cy + r * std::sin(a));
    }
  }
  return g;
}

bool inside(const ShapeGeometry& g, double x, double y) {
  if (g.ellipse) {
    const double dx = x - g.cx;
    const double dy = y - g.cy;
    const double c = std::cos(g.angle);
    const double s = std::sin(g.angle);
    const double u = (c * dx + s * dy) / g.rx;
    const double v = (-s * dx + c * dy) / g.ry;
    return u * u + v * v <= 1.0;
  }
  bool in = false;
  const auto& p = g.vertices;
  for (std::size_t i = 0, j = p.size() - 1; i < p.size(); j = i++) {
    const bool crosses = (p[i].second > y) != (p[j].second > y);
    if (crosses) {
      const double xi = p[j].first + (y - p[j].second) * (p[i].first - p[j].first) /
                                         (p[i].second - p[j].second);
      if (x < xi) in = !in;
    }
  }
  return in;
}

torch::Tensor rasterize(const ShapeGeometry& g, std::int64_t size) {
  auto mask = torch::zeros({1, size, size}, torch::kBool);
  auto acc = mask.accessor<bool, 3>();
  for (std::int64_t y = 0; y < size; ++y) {
    for (std::int64_t x = 0; x < size; ++x) {
      acc[0][y][x] = inside(g, static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5);
    }
  }
  return mask;
}

std::vector<std::filesystem::path> list_pngs(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw DatasetError("not a directory: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

void warn(FolderLoadReport* report, const std::string& message) {
  std::cerr << "warning: " << message << '\n';
  if (report) report->warnings.push_back(message);
}

std::optional<torch::Tensor> load_one(const std::filesystem::path& path, std::int64_t size,
                                      FolderLoadReport* report) {
  std::string error;
  auto img = read_png(path, &error);
  if (!img) {
    warn(report, "skipping unreadable " + path.string() + ": " + error);
    return std::nullopt;
  }
  return resize_images(from_rgb8(*img).unsqueeze(0), size).squeeze(0).clamp(-1.0, 1.0);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string to_string(DatasetMode mode) {
  return mode == DatasetMode::paired ? "paired" : "unpaired";
}

DatasetMode parse_dataset_mode(const std::string& name) {
  if (name == "paired") return DatasetMode::paired;
  if (name == "unpaired") return DatasetMode::unpaired;
  throw ArgumentError("unknown dataset mode '" + name + "' (expected paired or unpaired)");
}

Palette parse_palette(const std::string& name) {
  if (name == "continuous_hue") return Palette::continuous_hue;
  if (name == "k_colors") return Palette::k_colors;
  throw ArgumentError("unknown palette '" + name + "' (expected continuous_hue or k_colors)");
}

std::string to_string(Palette palette) {
  return palette == Palette::continuous_hue ? "continuous_hue" : "k_colors";
}

void ShapesColorsSpec::validate() const {
  if (image_size < 16) throw ArgumentError("shapes dataset requires image_size >= 16");
  if (n_shapes < 1) throw ArgumentError("shapes dataset requires n_shapes >= 1");
  if (palette == Palette::k_colors && k < 2) {
    throw ArgumentError("k_colors palette needs k >= 2 so every shape has several colorings");
  }
}

torch::Tensor hue_to_rgb(const torch::Tensor& hue) {
  auto h6 = hue.reshape({-1, 1}).to(torch::kFloat32) * 6.0;
  auto n = torch::tensor({5.0f, 3.0f, 1.0f}).view({1, 3});
  auto k = torch::fmod(n + h6, 6.0);
  auto ramp = torch::clamp(torch::minimum(k, 4.0 - k), 0.0, 1.0);
  auto rgb01 = 1.0 - ramp;
  return rgb01 * 2.0 - 1.0;
}

Dataset make_shapes_colors(const ShapesColorsSpec& spec, std::uint64_t seed) {
  spec.validate();
  const auto n = spec.n_shapes;
  const auto size = spec.image_size;
  std::mt19937_64 rng(derive_seed(seed, kSourceStream));
  std::mt19937_64 color_rng(derive_seed(seed, kTargetStream));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  auto draw_color = [&](std::int64_t& label) {
    if (spec.palette == Palette::k_colors) {
      label = static_cast<std::int64_t>(unit(color_rng) * static_cast<double>(spec.k));
      label = std::min(label, spec.k - 1);
      return static_cast<double>(label) / static_cast<double>(spec.k);
    }
    label = -1;
    return unit(color_rng);
  };

  auto masks = torch::zeros({n, 1, size, size}, torch::kBool);
  for (std::int64_t i = 0; i < n; ++i) masks[i] = rasterize(random_shape(rng, size), size);

  Dataset ds;
  ds.mode = spec.mode;
  ds.kind = "shapes_colors";
  ds.image_size = size;
  ds.source_mask = masks;
  auto maskf = masks.to(torch::kFloat32);
  ds.source = (maskf * 2.0 - 1.0).expand({-1, 3, -1, -1}).contiguous();

  torch::Tensor target_masks = masks;
  if (spec.mode == DatasetMode::unpaired) {
    // independent geometry so the target pool carries no pairing
    std::mt19937_64 target_rng(derive_seed(seed, kPairStream));
    target_masks = torch::zeros({n, 1, size, size}, torch::kBool);
    for (std::int64_t i = 0; i < n; ++i) target_masks[i] = rasterize(random_shape(target_rng, size), size);
  }

  auto hues = torch::zeros({n}, torch::kFloat32);
  auto labels = torch::zeros({n}, torch::kInt64);
  for (std::int64_t i = 0; i < n; ++i) {
    std::int64_t label = -1;
    hues[i] = draw_color(label);
    labels[i] = label;
  }
  auto rgb = hue_to_rgb(hues).view({n, 3, 1, 1});
  auto tmask = target_masks.to(torch::kFloat32);
  // background stays black (-1)
  ds.target = (tmask * (rgb + 1.0) - 1.0).contiguous();
  ds.target_hue = hues;
  ds.target_style = labels;
  return ds;
}

void CondGmmSpec::validate() const {
  if (n_modes < 2) throw ArgumentError("cond-gmm requires n_modes >= 2");
  if (n_samples < 1) throw ArgumentError("cond-gmm requires n_samples >= 1");
  if (!(noise_std > 0.0) || !(mode_radius > 0.0) || !(source_half_width > 0.0)) {
    throw ArgumentError("cond-gmm scales must be positive");
  }
  if (source_half_width + mode_radius + 5.0 * noise_std > 1.0) {
    throw ArgumentError("cond-gmm targets would leave [-1, 1]");
  }
}

torch::Tensor CondGmmSpec::offsets() const {
  auto angles = torch::arange(n_modes, torch::kFloat64) * (2.0 * std::numbers::pi / n_modes);
  return torch::stack({torch::cos(angles), torch::sin(angles)}, 1).mul(mode_radius).to(torch::kFloat32);
}

Dataset make_cond_gmm(const CondGmmSpec& spec, std::uint64_t seed) {
  spec.validate();
  auto gen = at::make_generator<at::CPUGeneratorImpl>(derive_seed(seed, kSourceStream));
  const auto n = spec.n_samples;
  auto a = (torch::rand({n, 2}, gen, torch::kFloat32) * 2.0 - 1.0) * spec.source_half_width;
  auto modes = torch::randint(spec.n_modes, {n}, gen, torch::kInt64);
  auto noise = torch::randn({n, 2}, gen, torch::kFloat32) * spec.noise_std;
  auto b = (a + spec.offsets().index_select(0, modes) + noise).clamp(-1.0, 1.0);

  Dataset ds;
  ds.mode = DatasetMode::paired;
  ds.kind = "cond_gmm";
  ds.image_size = 1;
  ds.source = a.view({n, 2, 1, 1}).contiguous();
  ds.target = b.view({n, 2, 1, 1}).contiguous();
  ds.target_style = modes;
  return ds;
}

Dataset load_image_folders(const std::filesystem::path& source_dir,
                           const std::filesystem::path& target_dir, DatasetMode mode,
                           std::int64_t image_size, FolderLoadReport* report) {
  if (image_size < 1) throw ArgumentError("image_size must be positive");
  const auto sources = list_pngs(source_dir);
  const auto targets = list_pngs(target_dir);

  Dataset ds;
  ds.mode = mode;
  ds.kind = "folders";
  ds.image_size = image_size;
  std::vector<torch::Tensor> src;
  std::vector<torch::Tensor> tgt;

  if (mode == DatasetMode::paired) {
    std::map<std::string, std::filesystem::path> by_stem;
    for (const auto& t : targets) by_stem[t.stem().string()] = t;
    std::set<std::string> source_stems;
    std::vector<std::string> orphans;
    for (const auto& s : sources) {
      source_stems.insert(s.stem().string());
      if (!by_stem.count(s.stem().string())) orphans.push_back("source/" + s.filename().string());
    }
    for (const auto& t : targets) {
      if (!source_stems.count(t.stem().string())) orphans.push_back("target/" + t.filename().string());
    }
    if (!orphans.empty()) {
      std::string list;
      for (const auto& o : orphans) list += (list.empty() ? "" : ", ") + o;
      throw DatasetError("paired folders are not aligned; unmatched files: " + list);
    }
    for (const auto& s : sources) {
      auto a = load_one(s, image_size, report);
      auto b = load_one(by_stem[s.stem().string()], image_size, report);
      if (!a || !b) {
        warn(report, "dropping pair '" + s.stem().string() + "'");
        continue;
      }
      src.push_back(*a);
      tgt.push_back(*b);
      ds.names.push_back(s.stem().string());
    }
  } else {
    for (const auto& s : sources) {
      if (auto a = load_one(s, image_size, report)) {
        src.push_back(*a);
        ds.names.push_back(s.stem().string());
      }
    }
    for (const auto& t : targets) {
      if (auto b = load_one(t, image_size, report)) tgt.push_back(*b);
    }
  }
  if (src.empty() || tgt.empty()) {
    throw DatasetError("no usable images under " + source_dir.string() + " / " + target_dir.string());
  }
  ds.source = torch::stack(src);
  ds.target = torch::stack(tgt);
  return ds;
}

Dataset load_image_folders(const std::filesystem::path& root, DatasetMode mode,
                           std::int64_t image_size, FolderLoadReport* report) {
  return load_image_folders(root / "source", root / "target", mode, image_size, report);
}

BatchIterator::BatchIterator(const Dataset& dataset, std::int64_t batch_size, std::uint64_t seed)
    : dataset_(&dataset), batch_size_(batch_size), seed_(seed) {
  if (batch_size < 1) throw ArgumentError("batch_size must be positive");
  if (dataset.source_count() < batch_size || dataset.target_count() < batch_size) {
    throw ArgumentError("dataset smaller than one batch");
  }
  if (dataset.mode == DatasetMode::paired && dataset.source_count() != dataset.target_count()) {
    throw ArgumentError("paired dataset has unequal source and target counts");
  }
}

torch::Tensor BatchIterator::permutation(std::uint64_t stream, std::int64_t epoch,
                                         std::int64_t n) const {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(
      derive_seed(derive_seed(seed_, stream), static_cast<std::uint64_t>(epoch)));
  return torch::randperm(n, gen, torch::kInt64);
}

Batch BatchIterator::next() {
  const auto& ds = *dataset_;
  auto take = [&](std::int64_t& epoch, std::int64_t& cursor, std::uint64_t stream, std::int64_t n) {
    if (cursor + batch_size_ > n) {
      ++epoch;
      cursor = 0;
    }
    auto idx = permutation(stream, epoch, n).slice(0, cursor, cursor + batch_size_);
    cursor += batch_size_;
    return idx;
  };

  if (ds.mode == DatasetMode::paired) {
    auto idx = take(state_.source_epoch, state_.source_cursor, kPairStream, ds.source_count());
    state_.target_epoch = state_.source_epoch;
    state_.target_cursor = state_.source_cursor;
    return {ds.source.index_select(0, idx), ds.target.index_select(0, idx)};
  }
  auto sidx = take(state_.source_epoch, state_.source_cursor, kSourceStream, ds.source_count());
  auto tidx = take(state_.target_epoch, state_.target_cursor, kTargetStream, ds.target_count());
  return {ds.source.index_select(0, sidx), ds.target.index_select(0, tidx)};
}

torch::Tensor source_mask(const torch::Tensor& source) {
  return source.mean(1, /*keepdim=*/true) > 0.0;
}

torch::Tensor chroma_statistic(const torch::Tensor& images, const torch::Tensor& masks) {
  if (images.dim() != 4 || images.size(1) != 3) {
    throw ArgumentError("chroma_statistic expects RGB [N,3,H,W]");
  }
  auto rgb = (images.detach().to(torch::kFloat64) + 1.0) * 0.5;
  auto r = rgb.select(1, 0);
  auto g = rgb.select(1, 1);
  auto b = rgb.select(1, 2);
  auto alpha = r - 0.5 * (g + b);
  auto beta = (std::sqrt(3.0) / 2.0) * (g - b);
  auto m = masks.reshape({images.size(0), images.size(2), images.size(3)}).to(torch::kFloat64);
  auto count = m.sum({1, 2}).clamp_min(1.0);
  auto ma = (alpha * m).sum({1, 2}) / count;
  auto mb = (beta * m).sum({1, 2}) / count;
  return torch::stack({ma, mb}, 1);
}

}  // namespace migan
