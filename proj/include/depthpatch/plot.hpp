#pragma once

// Small raster plots written as PNG: bar charts, loss curves and image grids.
// Axis ticks are labelled with a built-in 3x5 digit font.

#include <array>
#include <span>
#include <string>
#include <vector>

#include "depthpatch/core.hpp"

namespace depthpatch {

using Rgb = std::array<double, 3>;

class Canvas {
 public:
  Canvas(int height, int width, Rgb background = {1.0, 1.0, 1.0});

  void set(int y, int x, const Rgb& c);
  void fill_rect(int y0, int x0, int y1, int x1, const Rgb& c);  // inclusive-exclusive
  void line(double y0, double x0, double y1, double x1, const Rgb& c);
  // Digits, '.', '-', 'e' and '+'; other characters render as blanks.
  void text(int y, int x, const std::string& s, const Rgb& c, int scale = 1);
  void blit(int y, int x, const ImageTensor& image);

  [[nodiscard]] const ImageTensor& image() const;
  [[nodiscard]] int height() const { return height_; }
  [[nodiscard]] int width() const { return width_; }

 private:
  int height_;
  int width_;
  std::vector<double> data_;
  mutable ImageTensor cached_;
  mutable bool dirty_ = true;
};

// Qualitative palette for series and bars.
Rgb palette(std::size_t i);

struct ChartOptions {
  int height = 240;
  int width = 480;
  bool log_y = false;
};

// One bar per value, y axis from 0 to the largest value.
ImageTensor bar_chart(std::span<const double> values, const ChartOptions& options = {});
// Each series is drawn over a shared x range (its index).
ImageTensor line_chart(std::span<const std::vector<double>> series,
                       const ChartOptions& options = {});

// Perceptual dark-to-bright colour ramp of a disparity map.
ImageTensor colorize(const DisparityMap& map);
// Tiles row-major with `columns` tiles per row and a 2-pixel gutter. Tiles
// may differ in size; cells take the largest tile.
ImageTensor image_grid(std::span<const ImageTensor> tiles, int columns);

}  // namespace depthpatch
