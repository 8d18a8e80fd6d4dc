#pragma once

// Value types shared by every stage of the patch pipeline: unit-range pixel
// grids (RGB images, patches, disparity maps), binary masks and boxes.
//
// Layout is row-major with interleaved channels: element (y, x, c) lives at
// (y * width + x) * channels + c.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "depthpatch/errors.hpp"

namespace depthpatch {

struct Shape {
  int height = 0;
  int width = 0;

  [[nodiscard]] std::size_t area() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  }
  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

inline double clamp_unit(double v) { return std::clamp(v, 0.0, 1.0); }

// Dense grid whose elements are kept in [0,1]. Every constructor clamps, so a
// UnitGrid can never hold an out-of-range value.
template <int Channels>
class UnitGrid {
 public:
  static constexpr int channels = Channels;

  UnitGrid() = default;
  UnitGrid(int height, int width, double fill = 0.0)
      : shape_{height, width},
        data_(checked_size(height, width), clamp_unit(fill)) {}
  UnitGrid(int height, int width, std::vector<double> data)
      : shape_{height, width}, data_(std::move(data)) {
    if (data_.size() != checked_size(height, width)) {
      throw ShapeError("UnitGrid: data size " + std::to_string(data_.size()) +
                       " does not match " + std::to_string(height) + "x" +
                       std::to_string(width) + "x" + std::to_string(Channels));
    }
    for (double& v : data_) v = clamp_unit(v);
  }
  UnitGrid(Shape shape, std::vector<double> data)
      : UnitGrid(shape.height, shape.width, std::move(data)) {}

  [[nodiscard]] int height() const { return shape_.height; }
  [[nodiscard]] int width() const { return shape_.width; }
  [[nodiscard]] Shape shape() const { return shape_; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }

  [[nodiscard]] double at(int y, int x, int c = 0) const {
    return data_[index(y, x, c)];
  }
  [[nodiscard]] std::size_t index(int y, int x, int c = 0) const {
    return (static_cast<std::size_t>(y) * shape_.width + x) * Channels + c;
  }
  [[nodiscard]] std::span<const double> data() const { return data_; }
  [[nodiscard]] const std::vector<double>& values() const { return data_; }

  friend bool operator==(const UnitGrid&, const UnitGrid&) = default;

 private:
  static std::size_t checked_size(int height, int width) {
    if (height < 1 || width < 1) {
      throw ShapeError("UnitGrid: height and width must be >= 1, got " +
                       std::to_string(height) + "x" + std::to_string(width));
    }
    return static_cast<std::size_t>(height) * width * Channels;
  }

  Shape shape_{};
  std::vector<double> data_;
};

using ImageTensor = UnitGrid<3>;
using DisparityMap = UnitGrid<1>;  // 0 = farthest, 1 = closest

// Square RGB patch.
class Patch {
 public:
  Patch() = default;
  explicit Patch(ImageTensor pixels);
  Patch(int side, std::vector<double> data) : Patch(ImageTensor(side, side, std::move(data))) {}

  [[nodiscard]] int side() const { return pixels_.height(); }
  [[nodiscard]] const ImageTensor& pixels() const { return pixels_; }
  [[nodiscard]] std::span<const double> data() const { return pixels_.data(); }
  [[nodiscard]] double at(int y, int x, int c) const { return pixels_.at(y, x, c); }

  friend bool operator==(const Patch&, const Patch&) = default;

 private:
  ImageTensor pixels_;
};

class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int height, int width, bool fill = false);
  BinaryMask(int height, int width, std::vector<std::uint8_t> data);

  [[nodiscard]] int height() const { return shape_.height; }
  [[nodiscard]] int width() const { return shape_.width; }
  [[nodiscard]] Shape shape() const { return shape_; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }

  [[nodiscard]] bool at(int y, int x) const {
    return data_[static_cast<std::size_t>(y) * shape_.width + x] != 0;
  }
  [[nodiscard]] bool operator[](std::size_t i) const { return data_[i] != 0; }
  [[nodiscard]] std::span<const std::uint8_t> data() const { return data_; }

  [[nodiscard]] std::size_t count() const;
  [[nodiscard]] bool empty() const { return count() == 0; }
  // True if every set pixel of this mask is also set in `other`.
  [[nodiscard]] bool subset_of(const BinaryMask& other) const;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  Shape shape_{};
  std::vector<std::uint8_t> data_;
};

BinaryMask mask_union(const BinaryMask& a, const BinaryMask& b);

// f - p for p ⊆ f. Throws ShapeError on mismatch or when p is not a subset.
BinaryMask mask_difference(const BinaryMask& f, const BinaryMask& p);

struct BBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
  double score = 1.0;
  int class_id = 0;

  [[nodiscard]] double x0() const { return cx - w / 2.0; }
  [[nodiscard]] double x1() const { return cx + w / 2.0; }
  [[nodiscard]] double y0() const { return cy - h / 2.0; }
  [[nodiscard]] double y1() const { return cy + h / 2.0; }
  [[nodiscard]] double area() const { return w * h; }

  friend bool operator==(const BBox&, const BBox&) = default;
};

BBox box_from_corners(double x0, double y0, double x1, double y1, double score = 1.0,
                      int class_id = 0);

// Throws ShapeError unless w > 0, h > 0 and the box overlaps the image.
void validate_box(const BBox& box, Shape image);

struct MaskPair {
  BinaryMask patch_mask;  // where the patch replaces scene pixels
  BinaryMask focus_mask;  // the whole target region
  BBox source_box;
};

enum class Denominator { kMaskArea, kFullArea };

// Σ(|a−b| ⊙ m) / D with D = Σm or the full grid area.
double masked_mean_abs_diff(const DisparityMap& a, const DisparityMap& b, const BinaryMask& m,
                            Denominator denom);

void require_same_shape(Shape a, Shape b, const char* what);

}  // namespace depthpatch
