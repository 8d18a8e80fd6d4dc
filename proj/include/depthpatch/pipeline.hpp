#pragma once

// Patch transformer (expectation-over-transformation sampling) and patch
// applier (mask construction and masked composition). Every stage that
// touches patch pixels has a matching backward pass so the composed image is
// differentiable with respect to the patch.

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "depthpatch/core.hpp"

namespace depthpatch {

struct Range {
  double lo = 0.0;
  double hi = 0.0;

  [[nodiscard]] bool contains(double v) const { return v >= lo && v <= hi; }
  friend bool operator==(const Range&, const Range&) = default;
};

struct TransformRanges {
  Range scale{0.9, 1.1};
  Range rotation_deg{-20.0, 20.0};
  Range noise{-0.1, 0.1};
  Range contrast{0.8, 1.2};
  Range brightness{-0.1, 0.1};

  // Throws ConfigError on inverted bounds or non-positive scale/contrast.
  void validate() const;
  // Every range collapsed onto the identity value.
  static TransformRanges frozen();

  friend bool operator==(const TransformRanges&, const TransformRanges&) = default;
};

struct TransformSample {
  double scale = 1.0;
  double rotation_deg = 0.0;
  double contrast = 1.0;
  double brightness = 0.0;
  // Per-element offsets, side*side*3 long; empty means no noise.
  std::vector<double> noise;
  std::uint64_t rng_seed = 0;

  [[nodiscard]] bool within(const TransformRanges& r) const;
};

TransformSample identity_transform();

// Draws a sub-seed from `rng` and derives every field from it, so a sample can
// be regenerated from its recorded rng_seed alone.
TransformSample sample_transform(std::mt19937_64& rng, const TransformRanges& ranges,
                                 int patch_side);
TransformSample sample_transform_from_seed(std::uint64_t seed, const TransformRanges& ranges,
                                           int patch_side);

// clamp(contrast * patch + brightness + noise)
Patch apply_photometric(const Patch& patch, const TransformSample& t);
// Vector-Jacobian product of apply_photometric; zero where the output clamps.
std::vector<double> photometric_backward(const Patch& patch, const TransformSample& t,
                                         std::span<const double> grad_out);

// Sparse linear map from patch pixels to canvas pixels (bilinear taps).
class PatchWarp {
 public:
  struct Tap {
    std::uint32_t pixel = 0;                 // canvas pixel index y*W+x
    std::array<std::uint32_t, 4> source{};   // patch pixel indices y*S+x
    std::array<double, 4> weight{};
  };

  PatchWarp() = default;
  PatchWarp(int patch_side, Shape canvas, std::vector<Tap> taps)
      : patch_side_(patch_side), canvas_(canvas), taps_(std::move(taps)) {}

  [[nodiscard]] const std::vector<Tap>& taps() const { return taps_; }
  [[nodiscard]] int patch_side() const { return patch_side_; }
  [[nodiscard]] Shape canvas_shape() const { return canvas_; }

  // Accumulates the transpose of the warp applied to `grad_canvas` (H*W*3)
  // into `grad_patch` (S*S*3).
  void backward(std::span<const double> grad_canvas, std::span<double> grad_patch) const;

 private:
  int patch_side_ = 0;
  Shape canvas_{};
  std::vector<Tap> taps_;
};

struct PlacedPatch {
  ImageTensor canvas;      // warped patch, zero outside the mask
  BinaryMask patch_mask;   // footprint ∩ image ∩ focus box
  PatchWarp warp;
  int footprint_side = 0;  // pixel side of the pasted square before rotation
};

// Footprint side in pixels: round(scale_factor * max(w, h) * t.scale).
int footprint_side(const BBox& box, const TransformSample& t, double patch_scale_factor);

// Scales the patch to the footprint side, rotates it about its center and
// pastes it centered on the box. Returns nullopt (with a warning) when the
// clipped footprint is smaller than 2x2 pixels.
std::optional<PlacedPatch> place_patch(const Patch& patch, const BBox& box,
                                       const TransformSample& t, Shape image_shape,
                                       double patch_scale_factor);

// Ones on the pixels whose centers fall inside the box. Throws ShapeError when
// the box misses the image.
BinaryMask build_focus_mask(const BBox& box, Shape image_shape);

// (1 − M) ⊙ image + M ⊙ canvas
ImageTensor compose(const ImageTensor& image, const ImageTensor& canvas, const BinaryMask& mask);
// Gradient with respect to the canvas: M ⊙ grad_out.
std::vector<double> compose_backward(const BinaryMask& mask, std::span<const double> grad_out);

struct AdversarialExample {
  ImageTensor image;
  std::vector<MaskPair> masks;               // one per placed detection
  std::vector<TransformSample> provenance;   // aligned with masks
  BinaryMask patch_union;
  BinaryMask focus_union;
};

// Applies one patch to every box of an image. Boxes are pasted in ascending
// score order so the highest-scoring detection ends up on top. Detections
// whose footprint degenerates are skipped.
class PatchApplication {
 public:
  PatchApplication(const Patch& patch, const ImageTensor& image, std::span<const BBox> boxes,
                   std::span<const TransformSample> transforms, double patch_scale_factor);

  [[nodiscard]] const AdversarialExample& example() const { return example_; }
  [[nodiscard]] bool any_placed() const { return !example_.masks.empty(); }
  // dL/dpatch given dL/dimage (H*W*3).
  [[nodiscard]] std::vector<double> backward(std::span<const double> grad_image) const;

 private:
  struct Placement {
    TransformSample transform;
    PatchWarp warp;
  };

  Patch patch_;
  AdversarialExample example_;
  std::vector<Placement> placements_;
  std::vector<int> owner_;  // per pixel: index into placements_, or -1
};

}  // namespace depthpatch
