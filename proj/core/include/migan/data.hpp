#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace migan {

enum class DatasetMode { paired, unpaired };

std::string to_string(DatasetMode mode);
DatasetMode parse_dataset_mode(const std::string& name);

/// In-memory translation dataset. All images are NCHW in [-1, 1].
///
/// Paired datasets keep source[i] aligned with target[i]. Unpaired datasets
/// hold independent source and target pools.
struct Dataset {
  DatasetMode mode = DatasetMode::paired;
  std::string kind;
  std::int64_t image_size = 0;
  torch::Tensor source;
  torch::Tensor target;

  // Synthetic ground truth (undefined for folder datasets).
  torch::Tensor target_style;  // [M] int64 color/mode index, or -1 for continuous hue
  torch::Tensor target_hue;    // [M] float in [0, 1) for shapes, undefined otherwise
  torch::Tensor source_mask;   // [N, 1, H, W] bool geometry

  std::vector<std::string> names;  // file stems for folder datasets

  std::int64_t source_count() const { return source.size(0); }
  std::int64_t target_count() const { return target.size(0); }
};

enum class Palette { continuous_hue, k_colors };

struct ShapesColorsSpec {
  std::int64_t n_shapes = 1000;
  Palette palette = Palette::continuous_hue;
  std::int64_t k = 8;        // number of colors for Palette::k_colors
  std::int64_t image_size = 32;
  DatasetMode mode = DatasetMode::paired;

  void validate() const;
};

Palette parse_palette(const std::string& name);
std::string to_string(Palette palette);

/// White polygons/ellipses on black as the source; the same geometry filled
/// with one palette color as the target. Paired mode exposes exactly one
/// coloring per source shape.
Dataset make_shapes_colors(const ShapesColorsSpec& spec, std::uint64_t seed);

struct CondGmmSpec {
  std::int64_t n_modes = 5;
  std::int64_t n_samples = 2000;
  double source_half_width = 0.25;  // a ~ U[-w, w]^2
  double mode_radius = 0.6;         // offsets on a circle
  double noise_std = 0.02;

  void validate() const;
  /// Mode offsets [n_modes, 2].
  torch::Tensor offsets() const;
};

/// 1x1x2 "images": b = a + offset[m] + noise, m uniform over the modes.
Dataset make_cond_gmm(const CondGmmSpec& spec, std::uint64_t seed);

struct FolderLoadReport {
  std::vector<std::string> warnings;
};

/// Reads `source_dir/*.png` and `target_dir/*.png`. Paired mode aligns files
/// by identical stem and fails on any orphan; unreadable files are skipped.
Dataset load_image_folders(const std::filesystem::path& source_dir,
                           const std::filesystem::path& target_dir, DatasetMode mode,
                           std::int64_t image_size, FolderLoadReport* report = nullptr);
/// `<root>/source` and `<root>/target`.
Dataset load_image_folders(const std::filesystem::path& root, DatasetMode mode,
                           std::int64_t image_size, FolderLoadReport* report = nullptr);

struct Batch {
  torch::Tensor source;  // a
  torch::Tensor target;  // b (aligned with a only in paired mode)
};

/// Position of an iterator, enough to resume an identical batch order.
struct IteratorState {
  std::int64_t source_epoch = 0;
  std::int64_t source_cursor = 0;
  std::int64_t target_epoch = 0;
  std::int64_t target_cursor = 0;
};

/// Seeded epoch-shuffling iterator. Paired mode draws one permutation per
/// epoch for both tensors; unpaired mode shuffles source and target with
/// independent derived seeds. A partial tail batch starts a new epoch.
class BatchIterator {
 public:
  BatchIterator(const Dataset& dataset, std::int64_t batch_size, std::uint64_t seed);

  Batch next();

  IteratorState state() const { return state_; }
  void restore(const IteratorState& state) { state_ = state; }

 private:
  torch::Tensor permutation(std::uint64_t stream, std::int64_t epoch, std::int64_t n) const;

  const Dataset* dataset_;
  std::int64_t batch_size_;
  std::uint64_t seed_;
  IteratorState state_;
};

/// Mean (R-G, R+G-2B) opponent-color vector over masked pixels: [N, 2].
/// Hue is its angle; the vector form keeps variance well defined on the
/// hue circle.
torch::Tensor chroma_statistic(const torch::Tensor& images, const torch::Tensor& masks);

/// Geometry mask of a source image batch (pixels brighter than mid-gray).
torch::Tensor source_mask(const torch::Tensor& source);

/// Fully-saturated RGB in [-1,1] for hue h in [0,1): [N, 3].
torch::Tensor hue_to_rgb(const torch::Tensor& hue);

/// splitmix64 of (seed, stream) for independent derived streams.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace migan
