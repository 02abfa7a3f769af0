#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace migan {

/// 8-bit interleaved image, row-major HWC.
struct Rgb8Image {
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::int64_t channels = 3;
  std::vector<std::uint8_t> pixels;
};

/// Decodes any PNG libpng understands into RGB8. Returns nullopt and fills
/// `error` on failure.
std::optional<Rgb8Image> read_png(const std::filesystem::path& path, std::string* error = nullptr);
void write_png(const std::filesystem::path& path, const Rgb8Image& image);

/// [C,H,W] in [-1,1] (C = 1 or 3) -> RGB8, clamped and rounded.
Rgb8Image to_rgb8(const torch::Tensor& image);
/// RGB8 -> [3,H,W] float with x / 127.5 - 1, so 255 -> 1 and 0 -> -1.
torch::Tensor from_rgb8(const Rgb8Image& image);

/// Tiles [N,C,H,W] row-major into a rows x cols mosaic with `padding` px of
/// black between tiles. Returns [C, H', W'].
torch::Tensor make_grid(const torch::Tensor& images, std::int64_t rows, std::int64_t cols,
                        std::int64_t padding = 2);

/// Antialiased bilinear resize of [N,C,H,W] to size x size; no-op when the
/// size already matches.
torch::Tensor resize_images(const torch::Tensor& images, std::int64_t size);

}  // namespace migan
