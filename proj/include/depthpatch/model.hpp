#pragma once

// Victim depth models. A DepthModel maps a [0,1] RGB image to a raw disparity
// map and exposes a vector-Jacobian product with respect to the input pixels.
// Per-image min/max normalization to [0,1] is applied on top of the raw output
// and is itself differentiable.
//
// External networks plug in through the same interface (adapter contract):
// accept [0,1] RGB, return raw disparity, provide input gradients.

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "depthpatch/core.hpp"

namespace depthpatch {

struct ChannelNormalization {
  std::array<double, 3> mean{0.45, 0.45, 0.45};
  std::array<double, 3> std{0.225, 0.225, 0.225};

  friend bool operator==(const ChannelNormalization&, const ChannelNormalization&) = default;
};

// Differentiable evaluation of one image, holding whatever the backward pass
// needs.
class ForwardPass {
 public:
  virtual ~ForwardPass() = default;
  // Raw disparity, H*W.
  [[nodiscard]] virtual const std::vector<double>& raw() const = 0;
  // dL/dimage (H*W*3) given dL/draw (H*W).
  [[nodiscard]] virtual std::vector<double> input_gradient(
      std::span<const double> grad_raw) const = 0;
};

class DepthModel {
 public:
  virtual ~DepthModel() = default;
  [[nodiscard]] virtual std::string name() const = 0;
  [[nodiscard]] virtual Shape input_shape() const = 0;
  [[nodiscard]] virtual ChannelNormalization normalization() const = 0;
  [[nodiscard]] virtual std::vector<double> predict_raw(const ImageTensor& image) const = 0;
  [[nodiscard]] virtual std::unique_ptr<ForwardPass> forward_pass(const ImageTensor& image) const = 0;
  // Hex digest of all parameters.
  [[nodiscard]] virtual std::string parameter_checksum() const = 0;
  [[nodiscard]] virtual bool thread_safe() const { return false; }
};

struct DepthModelHandle {
  std::string name;
  Shape input_shape{};
  ChannelNormalization normalization{};
  bool frozen = true;
  // Non-differentiable forward() resizes mismatched inputs when set.
  bool allow_resize = false;
  std::shared_ptr<const DepthModel> model;

  [[nodiscard]] std::string parameter_checksum() const;
};

DepthModelHandle make_handle(std::shared_ptr<const DepthModel> model);

struct NormalizedDisparity {
  DisparityMap map;
  double raw_min = 0.0;
  double raw_max = 0.0;
  std::size_t argmin = 0;
  std::size_t argmax = 0;
};

// (raw − min) / (max − min) per image. A flat map normalizes to all zeros.
NormalizedDisparity normalize_disparity(Shape shape, std::span<const double> raw);
// dL/draw given dL/dnormalized, including the paths through min and max.
std::vector<double> normalize_backward(const NormalizedDisparity& n,
                                       std::span<const double> grad_normalized);

// Normalized disparity of one image. Throws ShapeError on a shape mismatch
// unless the handle allows resizing.
NormalizedDisparity predict(const DepthModelHandle& handle, const ImageTensor& image);
DisparityMap forward(const DepthModelHandle& handle, const ImageTensor& image);

// Image → normalized disparity with a backward pass to the image pixels.
class DisparityForward {
 public:
  DisparityForward(const DepthModelHandle& handle, const ImageTensor& image);
  [[nodiscard]] const DisparityMap& disparity() const { return normalized_.map; }
  [[nodiscard]] const NormalizedDisparity& normalized() const { return normalized_; }
  [[nodiscard]] std::vector<double> backward(std::span<const double> grad_disparity) const;

 private:
  std::unique_ptr<ForwardPass> pass_;
  NormalizedDisparity normalized_;
};

// Bilinear resize of an RGB image (pixel-center aligned).
ImageTensor resize_image(const ImageTensor& image, Shape target);
std::vector<double> resize_map(Shape from, std::span<const double> values, Shape to);

using ModelFactory = std::function<std::shared_ptr<const DepthModel>()>;

// Adapter lookup by name for externally supplied networks.
class ModelRegistry {
 public:
  static ModelRegistry& global();
  void add(std::string name, ModelFactory factory);
  [[nodiscard]] bool contains(const std::string& name) const;
  // Throws ConfigError for unknown names.
  [[nodiscard]] std::shared_ptr<const DepthModel> create(const std::string& name) const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, ModelFactory> factories_;
};

// Resolves a --model argument: a toy checkpoint directory, or a registered
// adapter name.
DepthModelHandle load_model(const std::string& spec);

}  // namespace depthpatch
