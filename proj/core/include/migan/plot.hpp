#pragma once

// Minimal raster charts for static PNG figures. Axis ranges are fitted to the
// data; there is no text rendering, so every chart is written next to the CSV
// it was drawn from.

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace migan {

struct Series {
  std::vector<double> x;
  std::vector<double> y;
  std::array<unsigned char, 3> color{31, 119, 180};
  bool markers = false;
};

struct PlotOptions {
  int width = 640;
  int height = 400;
  /// Horizontal reference lines (e.g. the -2 log 2 floor and 0).
  std::vector<double> reference_y;
};

void write_line_plot(const std::filesystem::path& path, const std::vector<Series>& series,
                     const PlotOptions& options = {});
void write_scatter_plot(const std::filesystem::path& path, const std::vector<Series>& series,
                        const PlotOptions& options = {});

/// Reads one numeric column (by header name) plus the first column as x.
Series read_csv_series(const std::filesystem::path& path, const std::string& column);

}  // namespace migan
