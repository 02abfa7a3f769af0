#include "migan/image_io.hpp"

#include <png.h>

#include <cstring>
#include <stdexcept>

#include "migan/errors.hpp"

namespace migan {

namespace F = torch::nn::functional;

std::optional<Rgb8Image> read_png(const std::filesystem::path& path, std::string* error) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    if (error) *error = png.message;
    return std::nullopt;
  }
  png.format = PNG_FORMAT_RGB;
  Rgb8Image image;
  image.width = png.width;
  image.height = png.height;
  image.channels = 3;
  image.pixels.resize(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, image.pixels.data(), 0, nullptr)) {
    if (error) *error = png.message;
    png_image_free(&png);
    return std::nullopt;
  }
  return image;
}

void write_png(const std::filesystem::path& path, const Rgb8Image& image) {
  if (image.channels != 3 && image.channels != 1) {
    throw ArgumentError("write_png supports 1 or 3 channels");
  }
  if (static_cast<std::int64_t>(image.pixels.size()) != image.width * image.height * image.channels) {
    throw ArgumentError("write_png: pixel buffer size does not match dimensions");
  }
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&png, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
    throw std::runtime_error("failed to write " + path.string() + ": " + png.message);
  }
}

Rgb8Image to_rgb8(const torch::Tensor& image) {
  if (image.dim() != 3 || (image.size(0) != 1 && image.size(0) != 3)) {
    throw ArgumentError("to_rgb8 expects [1|3, H, W]");
  }
  auto rgb = image.detach().to(torch::kFloat32);
  if (rgb.size(0) == 1) rgb = rgb.expand({3, -1, -1});
  auto bytes = ((rgb.clamp(-1.0, 1.0) + 1.0) * 127.5)
                   .round()
                   .to(torch::kUInt8)
                   .permute({1, 2, 0})
                   .contiguous();
  Rgb8Image out;
  out.height = bytes.size(0);
  out.width = bytes.size(1);
  out.channels = 3;
  out.pixels.assign(bytes.data_ptr<std::uint8_t>(), bytes.data_ptr<std::uint8_t>() + bytes.numel());
  return out;
}

torch::Tensor from_rgb8(const Rgb8Image& image) {
  auto bytes = torch::from_blob(const_cast<std::uint8_t*>(image.pixels.data()),
                                {image.height, image.width, image.channels}, torch::kUInt8);
  auto chw = bytes.permute({2, 0, 1}).to(torch::kFloat32);
  if (image.channels == 1) chw = chw.expand({3, -1, -1});
  return (chw / 127.5 - 1.0).contiguous();
}

torch::Tensor make_grid(const torch::Tensor& images, std::int64_t rows, std::int64_t cols,
                        std::int64_t padding) {
  if (images.dim() != 4) throw ArgumentError("make_grid expects [N,C,H,W]");
  if (rows < 1 || cols < 1 || rows * cols < images.size(0)) {
    throw ArgumentError("grid of " + std::to_string(rows) + "x" + std::to_string(cols) +
                        " cannot hold " + std::to_string(images.size(0)) + " images");
  }
  constexpr std::int64_t kMaxSide = 1 << 14;
  const auto c = images.size(1);
  const auto h = images.size(2);
  const auto w = images.size(3);
  const auto grid_h = rows * h + (rows + 1) * padding;
  const auto grid_w = cols * w + (cols + 1) * padding;
  if (grid_h > kMaxSide || grid_w > kMaxSide) {
    throw ArgumentError("grid dimensions exceed " + std::to_string(kMaxSide) + " px");
  }
  auto grid = torch::full({c, grid_h, grid_w}, -1.0, images.options());
  for (std::int64_t i = 0; i < images.size(0); ++i) {
    const auto r = i / cols;
    const auto col = i % cols;
    const auto y = padding + r * (h + padding);
    const auto x = padding + col * (w + padding);
    grid.index_put_({torch::indexing::Slice(), torch::indexing::Slice(y, y + h),
                     torch::indexing::Slice(x, x + w)},
                    images[i].detach());
  }
  return grid;
}

torch::Tensor resize_images(const torch::Tensor& images, std::int64_t size) {
  if (images.dim() != 4) throw ArgumentError("resize_images expects [N,C,H,W]");
  if (images.size(2) == size && images.size(3) == size) return images;
  return F::interpolate(images, F::InterpolateFuncOptions()
                                    .size(std::vector<std::int64_t>{size, size})
                                    .mode(torch::kBilinear)
                                    .align_corners(false)
                                    .antialias(true));
}

}  // namespace migan
