#include "depthpatch/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace depthpatch {

namespace {

void check_range(const Range& r, const char* name) {
  if (!std::isfinite(r.lo) || !std::isfinite(r.hi) || r.lo > r.hi) {
    throw ConfigError(std::string("transform range '") + name + "' has inverted or non-finite bounds");
  }
}

double uniform(std::mt19937_64& rng, const Range& r) {
  if (r.lo == r.hi) return r.lo;
  return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

// Pixel index range [first, last) whose centers lie in [lo, hi).
std::pair<int, int> center_span(double lo, double hi, int extent) {
  const int first = std::max(0, static_cast<int>(std::ceil(lo - 0.5)));
  const int last = std::min(extent, static_cast<int>(std::ceil(hi - 0.5)));
  return {first, std::max(first, last)};
}

}  // namespace

void TransformRanges::validate() const {
  check_range(scale, "scale");
  check_range(rotation_deg, "rotation_deg");
  check_range(noise, "noise");
  check_range(contrast, "contrast");
  check_range(brightness, "brightness");
  if (scale.lo <= 0.0) throw ConfigError("transform range 'scale' must be positive");
  if (contrast.lo < 0.0) throw ConfigError("transform range 'contrast' must be non-negative");
}

TransformRanges TransformRanges::frozen() {
  return TransformRanges{{1.0, 1.0}, {0.0, 0.0}, {0.0, 0.0}, {1.0, 1.0}, {0.0, 0.0}};
}

bool TransformSample::within(const TransformRanges& r) const {
  if (!r.scale.contains(scale) || !r.rotation_deg.contains(rotation_deg) ||
      !r.contrast.contains(contrast) || !r.brightness.contains(brightness)) {
    return false;
  }
  return std::all_of(noise.begin(), noise.end(), [&](double n) { return r.noise.contains(n); });
}

TransformSample identity_transform() { return TransformSample{}; }

TransformSample sample_transform_from_seed(std::uint64_t seed, const TransformRanges& ranges,
                                           int patch_side) {
  ranges.validate();
  std::mt19937_64 gen(seed);
  TransformSample t;
  t.rng_seed = seed;
  t.scale = uniform(gen, ranges.scale);
  t.rotation_deg = uniform(gen, ranges.rotation_deg);
  t.contrast = uniform(gen, ranges.contrast);
  t.brightness = uniform(gen, ranges.brightness);
  if (ranges.noise.lo != 0.0 || ranges.noise.hi != 0.0) {
    t.noise.resize(static_cast<std::size_t>(patch_side) * patch_side * 3);
    for (double& n : t.noise) n = uniform(gen, ranges.noise);
  }
  return t;
}

TransformSample sample_transform(std::mt19937_64& rng, const TransformRanges& ranges,
                                 int patch_side) {
  return sample_transform_from_seed(rng(), ranges, patch_side);
}

Patch apply_photometric(const Patch& patch, const TransformSample& t) {
  const auto in = patch.data();
  if (!t.noise.empty() && t.noise.size() != in.size()) {
    throw ShapeError("apply_photometric: noise size does not match patch");
  }
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double n = t.noise.empty() ? 0.0 : t.noise[i];
    out[i] = t.contrast * in[i] + t.brightness + n;  // clamped by Patch
  }
  return Patch(patch.side(), std::move(out));
}

std::vector<double> photometric_backward(const Patch& patch, const TransformSample& t,
                                         std::span<const double> grad_out) {
  const auto in = patch.data();
  if (grad_out.size() != in.size()) throw ShapeError("photometric_backward: gradient size");
  std::vector<double> grad(in.size(), 0.0);
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double n = t.noise.empty() ? 0.0 : t.noise[i];
    const double pre = t.contrast * in[i] + t.brightness + n;
    if (pre >= 0.0 && pre <= 1.0) grad[i] = t.contrast * grad_out[i];
  }
  return grad;
}

void PatchWarp::backward(std::span<const double> grad_canvas, std::span<double> grad_patch) const {
  for (const Tap& tap : taps_) {
    for (int k = 0; k < 4; ++k) {
      if (tap.weight[k] == 0.0) continue;
      for (int c = 0; c < 3; ++c) {
        grad_patch[tap.source[k] * 3u + c] += tap.weight[k] * grad_canvas[tap.pixel * 3u + c];
      }
    }
  }
}

int footprint_side(const BBox& box, const TransformSample& t, double patch_scale_factor) {
  return static_cast<int>(std::lround(patch_scale_factor * std::max(box.w, box.h) * t.scale));
}

BinaryMask build_focus_mask(const BBox& box, Shape image_shape) {
  const auto [x_first, x_last] = center_span(box.x0(), box.x1(), image_shape.width);
  const auto [y_first, y_last] = center_span(box.y0(), box.y1(), image_shape.height);
  if (!(box.w > 0.0) || !(box.h > 0.0) || x_first >= x_last || y_first >= y_last) {
    throw ShapeError("build_focus_mask: box does not intersect the image");
  }
  std::vector<std::uint8_t> data(image_shape.area(), 0);
  for (int y = y_first; y < y_last; ++y) {
    for (int x = x_first; x < x_last; ++x) {
      data[static_cast<std::size_t>(y) * image_shape.width + x] = 1;
    }
  }
  return {image_shape.height, image_shape.width, std::move(data)};
}

std::optional<PlacedPatch> place_patch(const Patch& patch, const BBox& box,
                                       const TransformSample& t, Shape image_shape,
                                       double patch_scale_factor) {
  validate_box(box, image_shape);
  const int side_px = footprint_side(box, t, patch_scale_factor);
  const int S = patch.side();
  if (side_px < 2) {
    spdlog::warn("place_patch: footprint side {} px below 2x2 for box at ({:.1f}, {:.1f}); skipped",
                 side_px, box.cx, box.cy);
    return std::nullopt;
  }

  const double theta = t.rotation_deg * std::numbers::pi / 180.0;
  const double cos_t = std::cos(theta);
  const double sin_t = std::sin(theta);
  const double to_patch = static_cast<double>(S) / side_px;
  const double half_diag = side_px * std::numbers::sqrt2 / 2.0 + 1.0;

  // Candidate pixels: rotated footprint bounds intersected with the box.
  const auto [bx0, bx1] = center_span(box.x0(), box.x1(), image_shape.width);
  const auto [by0, by1] = center_span(box.y0(), box.y1(), image_shape.height);
  const auto [fx0, fx1] = center_span(box.cx - half_diag, box.cx + half_diag, image_shape.width);
  const auto [fy0, fy1] = center_span(box.cy - half_diag, box.cy + half_diag, image_shape.height);
  const int x_first = std::max(bx0, fx0);
  const int x_last = std::min(bx1, fx1);
  const int y_first = std::max(by0, fy0);
  const int y_last = std::min(by1, fy1);

  const auto src = patch.data();
  std::vector<double> canvas(image_shape.area() * 3, 0.0);
  std::vector<std::uint8_t> mask(image_shape.area(), 0);
  std::vector<PatchWarp::Tap> taps;

  for (int y = y_first; y < y_last; ++y) {
    for (int x = x_first; x < x_last; ++x) {
      const double dx = x + 0.5 - box.cx;
      const double dy = y + 0.5 - box.cy;
      // Inverse rotation back into the unrotated footprint frame.
      const double u = (cos_t * dx + sin_t * dy) * to_patch + S / 2.0;
      const double v = (-sin_t * dx + cos_t * dy) * to_patch + S / 2.0;
      if (u < 0.0 || u >= S || v < 0.0 || v >= S) continue;

      const double su = u - 0.5;
      const double sv = v - 0.5;
      const double fu = std::floor(su);
      const double fv = std::floor(sv);
      const double au = su - fu;
      const double av = sv - fv;
      auto clamp_idx = [S](double i) { return static_cast<std::uint32_t>(std::clamp(static_cast<int>(i), 0, S - 1)); };
      const std::uint32_t u0 = clamp_idx(fu);
      const std::uint32_t u1 = clamp_idx(fu + 1);
      const std::uint32_t v0 = clamp_idx(fv);
      const std::uint32_t v1 = clamp_idx(fv + 1);

      PatchWarp::Tap tap;
      tap.pixel = static_cast<std::uint32_t>(y * image_shape.width + x);
      tap.source = {v0 * S + u0, v0 * S + u1, v1 * S + u0, v1 * S + u1};
      tap.weight = {(1 - au) * (1 - av), au * (1 - av), (1 - au) * av, au * av};
      for (int c = 0; c < 3; ++c) {
        double value = 0.0;
        for (int k = 0; k < 4; ++k) value += tap.weight[k] * src[tap.source[k] * 3u + c];
        canvas[tap.pixel * 3u + c] = value;
      }
      mask[tap.pixel] = 1;
      taps.push_back(tap);
    }
  }

  if (taps.size() < 4) {
    spdlog::warn("place_patch: clipped footprint has {} px (< 2x2) for box at ({:.1f}, {:.1f}); skipped",
                 taps.size(), box.cx, box.cy);
    return std::nullopt;
  }
  return PlacedPatch{ImageTensor(image_shape, std::move(canvas)),
                     BinaryMask(image_shape.height, image_shape.width, std::move(mask)),
                     PatchWarp(S, image_shape, std::move(taps)), side_px};
}

ImageTensor compose(const ImageTensor& image, const ImageTensor& canvas, const BinaryMask& mask) {
  require_same_shape(image.shape(), canvas.shape(), "compose");
  require_same_shape(image.shape(), mask.shape(), "compose");
  std::vector<double> out(image.values());
  const auto cv = canvas.data();
  for (std::size_t p = 0; p < mask.size(); ++p) {
    if (!mask[p]) continue;
    for (int c = 0; c < 3; ++c) out[p * 3 + c] = cv[p * 3 + c];
  }
  return ImageTensor(image.shape(), std::move(out));
}

std::vector<double> compose_backward(const BinaryMask& mask, std::span<const double> grad_out) {
  if (grad_out.size() != mask.size() * 3) throw ShapeError("compose_backward: gradient size");
  std::vector<double> grad(grad_out.size(), 0.0);
  for (std::size_t p = 0; p < mask.size(); ++p) {
    if (!mask[p]) continue;
    for (int c = 0; c < 3; ++c) grad[p * 3 + c] = grad_out[p * 3 + c];
  }
  return grad;
}

PatchApplication::PatchApplication(const Patch& patch, const ImageTensor& image,
                                   std::span<const BBox> boxes,
                                   std::span<const TransformSample> transforms,
                                   double patch_scale_factor)
    : patch_(patch) {
  if (boxes.size() != transforms.size()) {
    throw ShapeError("PatchApplication: one transform per box required");
  }
  const Shape shape = image.shape();
  example_.image = image;
  example_.patch_union = BinaryMask(shape.height, shape.width);
  example_.focus_union = BinaryMask(shape.height, shape.width);
  owner_.assign(shape.area(), -1);

  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Lowest score first so the best detection is pasted last.
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t l, std::size_t r) { return boxes[l].score < boxes[r].score; });

  for (const std::size_t k : order) {
    const Patch transformed = apply_photometric(patch, transforms[k]);
    auto placed = place_patch(transformed, boxes[k], transforms[k], shape, patch_scale_factor);
    if (!placed) continue;
    BinaryMask focus = build_focus_mask(boxes[k], shape);

    example_.image = compose(example_.image, placed->canvas, placed->patch_mask);
    const int index = static_cast<int>(placements_.size());
    for (std::size_t p = 0; p < owner_.size(); ++p) {
      if (placed->patch_mask[p]) owner_[p] = index;
    }
    example_.patch_union = mask_union(example_.patch_union, placed->patch_mask);
    example_.focus_union = mask_union(example_.focus_union, focus);
    example_.masks.push_back(MaskPair{placed->patch_mask, std::move(focus), boxes[k]});
    example_.provenance.push_back(transforms[k]);
    placements_.push_back(Placement{transforms[k], std::move(placed->warp)});
  }
}

std::vector<double> PatchApplication::backward(std::span<const double> grad_image) const {
  const std::size_t n = patch_.data().size();
  std::vector<double> grad_patch(n, 0.0);
  if (grad_image.size() != owner_.size() * 3) throw ShapeError("PatchApplication: gradient size");

  std::vector<double> grad_canvas(grad_image.size());
  std::vector<double> grad_transformed(n);
  for (std::size_t k = 0; k < placements_.size(); ++k) {
    // Only pixels where this paste is the visible one receive gradient.
    for (std::size_t p = 0; p < owner_.size(); ++p) {
      const bool visible = owner_[p] == static_cast<int>(k);
      for (int c = 0; c < 3; ++c) grad_canvas[p * 3 + c] = visible ? grad_image[p * 3 + c] : 0.0;
    }
    std::fill(grad_transformed.begin(), grad_transformed.end(), 0.0);
    placements_[k].warp.backward(grad_canvas, grad_transformed);
    const auto g = photometric_backward(patch_, placements_[k].transform, grad_transformed);
    for (std::size_t i = 0; i < n; ++i) grad_patch[i] += g[i];
  }
  return grad_patch;
}

}  // namespace depthpatch
