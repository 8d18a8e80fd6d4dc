#include "depthpatch/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace depthpatch {

namespace {

// 3x5 glyphs, one row per entry, bit 2 = leftmost column.
constexpr std::array<std::array<std::uint8_t, 5>, 10> kDigits{{
    {7, 5, 5, 5, 7}, {2, 6, 2, 2, 7}, {7, 1, 7, 4, 7}, {7, 1, 7, 1, 7}, {5, 5, 7, 1, 1},
    {7, 4, 7, 1, 7}, {7, 4, 7, 5, 7}, {7, 1, 1, 1, 1}, {7, 5, 7, 5, 7}, {7, 5, 7, 1, 7},
}};

std::array<std::uint8_t, 5> glyph(char c) {
  if (c >= '0' && c <= '9') return kDigits[c - '0'];
  switch (c) {
    case '.': return {0, 0, 0, 0, 2};
    case '-': return {0, 0, 7, 0, 0};
    case '+': return {0, 2, 7, 2, 0};
    case 'e': return {0, 7, 7, 4, 7};
    default: return {0, 0, 0, 0, 0};
  }
}

std::string tick_label(double v) {
  char buf[32];
  if (v != 0.0 && (std::abs(v) < 1e-2 || std::abs(v) >= 1e4)) {
    std::snprintf(buf, sizeof buf, "%.1e", v);
  } else {
    std::snprintf(buf, sizeof buf, "%.3g", v);
  }
  return buf;
}

constexpr Rgb kAxis{0.2, 0.2, 0.2};
constexpr Rgb kGrid{0.88, 0.88, 0.88};

struct Frame {
  int left = 40, right = 8, top = 8, bottom = 14;
};

void draw_axes(Canvas& c, const Frame& f, double lo, double hi, bool log_y) {
  const int x0 = f.left, x1 = c.width() - f.right;
  const int y0 = f.top, y1 = c.height() - f.bottom;
  for (int k = 0; k <= 4; ++k) {
    const int y = y1 - static_cast<int>(std::lround((y1 - y0) * k / 4.0));
    c.line(y, x0, y, x1, kGrid);
    double v = lo + (hi - lo) * k / 4.0;
    if (log_y) v = std::pow(10.0, v);
    c.text(y - 2, 2, tick_label(v), kAxis);
  }
  c.line(y0, x0, y1, x0, kAxis);
  c.line(y1, x0, y1, x1, kAxis);
}

}  // namespace

Canvas::Canvas(int height, int width, Rgb background) : height_(height), width_(width) {
  if (height < 1 || width < 1) throw ShapeError("Canvas: size must be positive");
  data_.resize(static_cast<std::size_t>(height) * width * 3);
  for (std::size_t i = 0; i < data_.size(); i += 3) {
    std::copy(background.begin(), background.end(), data_.begin() + static_cast<long>(i));
  }
}

void Canvas::set(int y, int x, const Rgb& c) {
  if (y < 0 || x < 0 || y >= height_ || x >= width_) return;
  const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
  for (int k = 0; k < 3; ++k) data_[i + k] = c[k];
  dirty_ = true;
}

void Canvas::fill_rect(int y0, int x0, int y1, int x1, const Rgb& c) {
  for (int y = std::max(0, y0); y < std::min(height_, y1); ++y) {
    for (int x = std::max(0, x0); x < std::min(width_, x1); ++x) set(y, x, c);
  }
}

void Canvas::line(double y0, double x0, double y1, double x1, const Rgb& c) {
  const int steps = static_cast<int>(std::ceil(std::max(std::abs(y1 - y0), std::abs(x1 - x0)))) + 1;
  for (int s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) / steps;
    set(static_cast<int>(std::lround(y0 + t * (y1 - y0))), static_cast<int>(std::lround(x0 + t * (x1 - x0))), c);
  }
}

void Canvas::text(int y, int x, const std::string& s, const Rgb& c, int scale) {
  for (const char ch : s) {
    const auto g = glyph(ch);
    for (int r = 0; r < 5; ++r) {
      for (int col = 0; col < 3; ++col) {
        if (g[r] & (4 >> col)) fill_rect(y + r * scale, x + col * scale, y + (r + 1) * scale, x + (col + 1) * scale, c);
      }
    }
    x += 4 * scale;
  }
}

void Canvas::blit(int y, int x, const ImageTensor& image) {
  for (int r = 0; r < image.height(); ++r) {
    for (int col = 0; col < image.width(); ++col) {
      set(y + r, x + col, {image.at(r, col, 0), image.at(r, col, 1), image.at(r, col, 2)});
    }
  }
}

const ImageTensor& Canvas::image() const {
  if (dirty_) {
    cached_ = ImageTensor(height_, width_, data_);
    dirty_ = false;
  }
  return cached_;
}

Rgb palette(std::size_t i) {
  static constexpr std::array<Rgb, 6> colors{{{0.12, 0.47, 0.71},
                                              {1.00, 0.50, 0.05},
                                              {0.17, 0.63, 0.17},
                                              {0.84, 0.15, 0.16},
                                              {0.58, 0.40, 0.74},
                                              {0.55, 0.34, 0.29}}};
  return colors[i % colors.size()];
}

ImageTensor bar_chart(std::span<const double> values, const ChartOptions& o) {
  if (values.empty()) throw ConfigError("bar_chart: no values");
  Canvas c(o.height, o.width);
  const Frame f;
  double hi = 0.0;
  for (const double v : values) {
    if (!std::isfinite(v)) throw ConfigError("bar_chart: non-finite value");
    hi = std::max(hi, v);
  }
  if (hi <= 0.0) hi = 1.0;
  draw_axes(c, f, 0.0, hi, false);
  const double plot_w = o.width - f.left - f.right;
  const double slot = plot_w / static_cast<double>(values.size());
  const int base = o.height - f.bottom;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const int x0 = f.left + static_cast<int>(slot * i + slot * 0.15) + 1;
    const int x1 = f.left + static_cast<int>(slot * (i + 1) - slot * 0.15) + 1;
    const int top = base - static_cast<int>(std::lround(std::max(0.0, values[i]) / hi * (base - f.top)));
    c.fill_rect(top, x0, base, std::max(x0 + 1, x1), palette(i));
    c.text(base + 4, (x0 + x1) / 2 - 2, std::to_string(i), kAxis);
  }
  return c.image();
}

ImageTensor line_chart(std::span<const std::vector<double>> series, const ChartOptions& o) {
  std::size_t n = 0;
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& s : series) {
    n = std::max(n, s.size());
    for (double v : s) {
      if (o.log_y) {
        if (!(v > 0.0)) continue;
        v = std::log10(v);
      }
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (n == 0 || !std::isfinite(lo)) throw ConfigError("line_chart: no finite values");
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  Canvas c(o.height, o.width);
  const Frame f;
  draw_axes(c, f, lo, hi, o.log_y);
  const double x_span = std::max<double>(1.0, static_cast<double>(n - 1));
  const double plot_w = o.width - f.left - f.right;
  const double plot_h = o.height - f.top - f.bottom;
  auto to_y = [&](double v) { return f.top + plot_h * (1.0 - (v - lo) / (hi - lo)); };
  c.text(o.height - f.bottom + 4, f.left, "0", kAxis);
  c.text(o.height - f.bottom + 4, o.width - f.right - 16, std::to_string(n - 1), kAxis);
  for (std::size_t k = 0; k < series.size(); ++k) {
    bool have = false;
    double py = 0, px = 0;
    for (std::size_t i = 0; i < series[k].size(); ++i) {
      double v = series[k][i];
      if (o.log_y) v = v > 0.0 ? std::log10(v) : NAN;
      if (!std::isfinite(v)) {
        have = false;
        continue;
      }
      const double x = f.left + plot_w * static_cast<double>(i) / x_span;
      const double y = to_y(v);
      if (have) {
        c.line(py, px, y, x, palette(k));
      } else {
        c.set(static_cast<int>(std::lround(y)), static_cast<int>(std::lround(x)), palette(k));
      }
      py = y;
      px = x;
      have = true;
    }
  }
  return c.image();
}

ImageTensor colorize(const DisparityMap& map) {
  // Piecewise-linear approximation of a dark-purple to yellow ramp.
  static constexpr std::array<Rgb, 5> stops{{{0.00, 0.00, 0.02},
                                             {0.32, 0.07, 0.48},
                                             {0.72, 0.21, 0.47},
                                             {0.98, 0.55, 0.25},
                                             {0.99, 0.99, 0.75}}};
  std::vector<double> out(map.size() * 3);
  for (std::size_t i = 0; i < map.size(); ++i) {
    const double t = map.data()[i] * (stops.size() - 1);
    const std::size_t k = std::min<std::size_t>(stops.size() - 2, static_cast<std::size_t>(t));
    const double w = t - static_cast<double>(k);
    for (int c = 0; c < 3; ++c) out[i * 3 + c] = stops[k][c] * (1.0 - w) + stops[k + 1][c] * w;
  }
  return ImageTensor(map.shape(), std::move(out));
}

ImageTensor image_grid(std::span<const ImageTensor> tiles, int columns) {
  if (tiles.empty() || columns < 1) throw ConfigError("image_grid: need tiles and columns >= 1");
  int cell_h = 0, cell_w = 0;
  for (const auto& t : tiles) {
    cell_h = std::max(cell_h, t.height());
    cell_w = std::max(cell_w, t.width());
  }
  constexpr int gutter = 2;
  const int rows = static_cast<int>((tiles.size() + columns - 1) / columns);
  const int cols = std::min<int>(columns, static_cast<int>(tiles.size()));
  Canvas c(rows * cell_h + (rows + 1) * gutter, cols * cell_w + (cols + 1) * gutter);
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    const int r = static_cast<int>(i) / columns, k = static_cast<int>(i) % columns;
    c.blit(gutter + r * (cell_h + gutter), gutter + k * (cell_w + gutter), tiles[i]);
  }
  return c.image();
}

}  // namespace depthpatch
