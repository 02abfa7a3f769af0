#include <filesystem>
#include <fstream>

#include "testing.hpp"

#include "migan/errors.hpp"
#include "migan/image_io.hpp"
#include "migan/plot.hpp"

using namespace migan;
namespace fs = std::filesystem;

TEST_CASE("png roundtrip preserves 8-bit pixels") {
  auto path = fs::temp_directory_path() / "migan_io_roundtrip.png";
  auto x = torch::linspace(-1, 1, 3 * 5 * 7).view({3, 5, 7});
  auto img = to_rgb8(x);
  CHECK(img.width == 7);
  CHECK(img.height == 5);
  write_png(path, img);
  auto back = read_png(path);
  REQUIRE(back.has_value());
  CHECK(back->pixels == img.pixels);
  CHECK(torch::allclose(from_rgb8(*back), x, 0, 1.0 / 127.5));
  fs::remove(path);
}

TEST_CASE("rgb8 conversion endpoints and clamping") {
  auto img = to_rgb8(torch::tensor({-1.0f, 1.0f, 3.0f}).view({1, 1, 3}));
  CHECK(img.channels == 3);
  CHECK((img.pixels == std::vector<std::uint8_t>{0, 0, 0, 255, 255, 255, 255, 255, 255}));
  auto t = from_rgb8(img);
  CHECK(t[0][0][0].item<float>() == -1.0f);
  CHECK(t[0][0][1].item<float>() == 1.0f);
  CHECK_THROWS_AS(to_rgb8(torch::zeros({2, 3, 3})), ArgumentError);
}

TEST_CASE("unreadable png reports an error") {
  auto path = fs::temp_directory_path() / "migan_io_bad.png";
  std::ofstream(path) << "definitely not a png";
  std::string error;
  CHECK_FALSE(read_png(path, &error).has_value());
  CHECK_FALSE(error.empty());
  CHECK_FALSE(read_png(path.string() + ".missing").has_value());
  fs::remove(path);
}

TEST_CASE("grid tiling layout") {
  auto tiles = torch::stack({torch::full({3, 4, 4}, 0.5f), torch::full({3, 4, 4}, -0.5f)});
  auto grid = make_grid(tiles, 1, 2, 2);
  CHECK(grid.sizes() == torch::IntArrayRef({3, 4 + 4, 2 * 4 + 3 * 2}));
  CHECK(grid[0][2][2].item<float>() == 0.5f);
  CHECK(grid[0][2][8].item<float>() == -0.5f);
  CHECK(grid[0][0][0].item<float>() == -1.0f);
  CHECK_THROWS_AS(make_grid(tiles, 1, 1), ArgumentError);
}

TEST_CASE("resize keeps constant images constant") {
  auto x = torch::full({2, 3, 8, 8}, 0.25f);
  auto y = resize_images(x, 4);
  CHECK(y.sizes() == torch::IntArrayRef({2, 3, 4, 4}));
  CHECK(torch::allclose(y, torch::full_like(y, 0.25f)));
  CHECK(resize_images(x, 8).data_ptr() == x.data_ptr());
}

TEST_CASE("plots render and csv columns read back") {
  auto dir = fs::temp_directory_path() / "migan_plot";
  fs::create_directories(dir);
  {
    std::ofstream csv(dir / "trace.csv");
    csv << "step,estimate,other\n0,-1.38,1\n1,-1.0,2\n2,-0.5,3\n";
  }
  auto s = read_csv_series(dir / "trace.csv", "estimate");
  CHECK((s.x == std::vector<double>{0, 1, 2}));
  CHECK((s.y == std::vector<double>{-1.38, -1.0, -0.5}));
  CHECK_THROWS_AS(read_csv_series(dir / "trace.csv", "missing"), ArgumentError);

  write_line_plot(dir / "line.png", {s}, {.width = 200, .height = 100, .reference_y = {-1.386, 0.0}});
  auto img = read_png(dir / "line.png");
  REQUIRE(img.has_value());
  CHECK(img->width == 200);
  CHECK(img->height == 100);
  write_scatter_plot(dir / "scatter.png", {s});
  CHECK(fs::exists(dir / "scatter.png"));
  Series bad{.x = {1, 2}, .y = {1}};
  CHECK_THROWS_AS(write_line_plot(dir / "bad.png", {bad}), ArgumentError);
  fs::remove_all(dir);
}
