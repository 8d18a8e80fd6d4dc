#include "depthpatch/core.hpp"

#include <cmath>
#include <numeric>

namespace depthpatch {

std::string to_string(const Shape& s) {
  return std::to_string(s.height) + "x" + std::to_string(s.width);
}

void require_same_shape(Shape a, Shape b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": shape mismatch " + to_string(a) + " vs " +
                     to_string(b));
  }
}

Patch::Patch(ImageTensor pixels) : pixels_(std::move(pixels)) {
  if (pixels_.height() != pixels_.width()) {
    throw ShapeError("Patch must be square, got " + to_string(pixels_.shape()));
  }
}

BinaryMask::BinaryMask(int height, int width, bool fill) : shape_{height, width} {
  if (height < 1 || width < 1) throw ShapeError("BinaryMask: empty shape " + to_string(shape_));
  data_.assign(shape_.area(), fill ? 1 : 0);
}

BinaryMask::BinaryMask(int height, int width, std::vector<std::uint8_t> data)
    : shape_{height, width}, data_(std::move(data)) {
  if (height < 1 || width < 1) throw ShapeError("BinaryMask: empty shape " + to_string(shape_));
  if (data_.size() != shape_.area()) {
    throw ShapeError("BinaryMask: data size " + std::to_string(data_.size()) +
                     " does not match " + to_string(shape_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (data_[i] > 1) {
      throw ShapeError("BinaryMask: non-binary value at index " + std::to_string(i));
    }
  }
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

bool BinaryMask::subset_of(const BinaryMask& other) const {
  if (shape_ != other.shape_) return false;
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (data_[i] && !other.data_[i]) return false;
  }
  return true;
}

BinaryMask mask_union(const BinaryMask& a, const BinaryMask& b) {
  require_same_shape(a.shape(), b.shape(), "mask_union");
  std::vector<std::uint8_t> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (a[i] || b[i]) ? 1 : 0;
  return {a.height(), a.width(), std::move(out)};
}

BinaryMask mask_difference(const BinaryMask& f, const BinaryMask& p) {
  require_same_shape(f.shape(), p.shape(), "mask_difference");
  std::vector<std::uint8_t> out(f.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (p[i] && !f[i]) {
      const auto y = i / static_cast<std::size_t>(f.width());
      const auto x = i % static_cast<std::size_t>(f.width());
      throw ShapeError("mask_difference: patch mask not contained in focus mask at (y=" +
                       std::to_string(y) + ", x=" + std::to_string(x) + ")");
    }
    out[i] = (f[i] && !p[i]) ? 1 : 0;
  }
  return {f.height(), f.width(), std::move(out)};
}

BBox box_from_corners(double x0, double y0, double x1, double y1, double score, int class_id) {
  return BBox{(x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0, score, class_id};
}

void validate_box(const BBox& box, Shape image) {
  if (!(box.w > 0.0) || !(box.h > 0.0)) {
    throw ShapeError("BBox: width and height must be positive");
  }
  const bool overlaps = box.x1() > 0.0 && box.x0() < image.width && box.y1() > 0.0 &&
                        box.y0() < image.height;
  if (!overlaps) {
    throw ShapeError("BBox: box does not intersect the " + to_string(image) + " image");
  }
}

double masked_mean_abs_diff(const DisparityMap& a, const DisparityMap& b, const BinaryMask& m,
                            Denominator denom) {
  require_same_shape(a.shape(), b.shape(), "masked_mean_abs_diff");
  require_same_shape(a.shape(), m.shape(), "masked_mean_abs_diff");
  double numerator = 0.0;
  std::size_t mask_area = 0;
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    if (!m[i]) continue;
    ++mask_area;
    numerator += std::abs(da[i] - db[i]);
  }
  const double d = denom == Denominator::kMaskArea ? static_cast<double>(mask_area)
                                                   : static_cast<double>(a.shape().area());
  if (denom == Denominator::kMaskArea && mask_area == 0) {
    throw ShapeError("masked_mean_abs_diff: empty mask");
  }
  if (numerator == 0.0) return 0.0;
  return numerator / d;
}

}  // namespace depthpatch
