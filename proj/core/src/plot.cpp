#include "migan/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "migan/errors.hpp"
#include "migan/image_io.hpp"

namespace migan {

namespace {

constexpr int kMargin = 30;

struct Canvas {
  Rgb8Image image;

  Canvas(int w, int h) {
    image.width = w;
    image.height = h;
    image.channels = 3;
    image.pixels.assign(static_cast<std::size_t>(w) * h * 3, 255);
  }

  void set(int x, int y, const std::array<unsigned char, 3>& c) {
    if (x < 0 || y < 0 || x >= image.width || y >= image.height) return;
    auto* p = &image.pixels[(static_cast<std::size_t>(y) * image.width + x) * 3];
    p[0] = c[0];
    p[1] = c[1];
    p[2] = c[2];
  }

  void line(int x0, int y0, int x1, int y1, const std::array<unsigned char, 3>& c) {
    // Bresenham
    int dx = std::abs(x1 - x0);
    int dy = -std::abs(y1 - y0);
    int sx = x0 < x1 ? 1 : -1;
    int sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    for (;;) {
      set(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }

  void marker(int x, int y, const std::array<unsigned char, 3>& c) {
    for (int dy = -2; dy <= 2; ++dy)
      for (int dx = -2; dx <= 2; ++dx) set(x + dx, y + dy, c);
  }
};

struct Frame {
  double xmin, xmax, ymin, ymax;
  int w, h;

  int px(double x) const {
    return kMargin + static_cast<int>(std::lround((x - xmin) / (xmax - xmin) * (w - 2 * kMargin)));
  }
  int py(double y) const {
    return h - kMargin - static_cast<int>(std::lround((y - ymin) / (ymax - ymin) * (h - 2 * kMargin)));
  }
};

Frame fit_frame(const std::vector<Series>& series, const PlotOptions& options) {
  double xmin = std::numeric_limits<double>::infinity();
  double xmax = -xmin;
  double ymin = xmin;
  double ymax = -xmin;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw ArgumentError("series x/y lengths differ");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  for (double r : options.reference_y) {
    ymin = std::min(ymin, r);
    ymax = std::max(ymax, r);
  }
  if (!std::isfinite(xmin)) {
    xmin = 0;
    xmax = 1;
    ymin = 0;
    ymax = 1;
  }
  if (xmax - xmin < 1e-12) xmax = xmin + 1.0;
  if (ymax - ymin < 1e-12) ymax = ymin + 1.0;
  const double pad = 0.05 * (ymax - ymin);
  return {xmin, xmax, ymin - pad, ymax + pad, options.width, options.height};
}

void draw_axes(Canvas& canvas, const Frame& f, const PlotOptions& options) {
  const std::array<unsigned char, 3> axis{0, 0, 0};
  const std::array<unsigned char, 3> ref{170, 170, 170};
  canvas.line(kMargin, f.h - kMargin, f.w - kMargin, f.h - kMargin, axis);
  canvas.line(kMargin, kMargin, kMargin, f.h - kMargin, axis);
  for (double r : options.reference_y) {
    const int y = f.py(r);
    for (int x = kMargin; x < f.w - kMargin; x += 4) canvas.line(x, y, x + 1, y, ref);
  }
}

void write_plot(const std::filesystem::path& path, const std::vector<Series>& series,
                const PlotOptions& options, bool connect) {
  Canvas canvas(options.width, options.height);
  const auto frame = fit_frame(series, options);
  draw_axes(canvas, frame, options);
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      const int x = frame.px(s.x[i]);
      const int y = frame.py(s.y[i]);
      if (connect && i > 0 && std::isfinite(s.x[i - 1]) && std::isfinite(s.y[i - 1])) {
        canvas.line(frame.px(s.x[i - 1]), frame.py(s.y[i - 1]), x, y, s.color);
      }
      if (s.markers || !connect) canvas.marker(x, y, s.color);
    }
  }
  write_png(path, canvas.image);
}

}  // namespace

void write_line_plot(const std::filesystem::path& path, const std::vector<Series>& series,
                     const PlotOptions& options) {
  write_plot(path, series, options, /*connect=*/true);
}

void write_scatter_plot(const std::filesystem::path& path, const std::vector<Series>& series,
                        const PlotOptions& options) {
  write_plot(path, series, options, /*connect=*/false);
}

Series read_csv_series(const std::filesystem::path& path, const std::string& column) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + " is empty");
  std::vector<std::string> header;
  {
    std::istringstream row(line);
    std::string field;
    while (std::getline(row, field, ',')) header.push_back(field);
  }
  const auto it = std::find(header.begin(), header.end(), column);
  if (it == header.end()) {
    throw ArgumentError("column '" + column + "' not found in " + path.string());
  }
  const auto col = static_cast<std::size_t>(it - header.begin());
  Series series;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(row, field, ',')) fields.push_back(field);
    if (fields.size() <= col) continue;
    series.x.push_back(std::stod(fields[0]));
    series.y.push_back(fields[col].empty() ? std::nan("") : std::stod(fields[col]));
  }
  return series;
}

}  // namespace migan
