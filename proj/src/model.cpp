#include "depthpatch/model.hpp"

#include <algorithm>
#include <cmath>

#include "depthpatch/toy_unet.hpp"

namespace depthpatch {

std::string DepthModelHandle::parameter_checksum() const {
  if (!model) throw ConfigError("model handle has no backend");
  return model->parameter_checksum();
}

DepthModelHandle make_handle(std::shared_ptr<const DepthModel> model) {
  if (!model) throw ConfigError("make_handle: null model");
  DepthModelHandle h;
  h.name = model->name();
  h.input_shape = model->input_shape();
  h.normalization = model->normalization();
  h.frozen = true;
  h.model = std::move(model);
  return h;
}

NormalizedDisparity normalize_disparity(Shape shape, std::span<const double> raw) {
  if (raw.size() != shape.area() || raw.empty()) {
    throw ShapeError("normalize_disparity: raw size does not match " + to_string(shape));
  }
  NormalizedDisparity n;
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  n.argmin = static_cast<std::size_t>(lo - raw.begin());
  n.argmax = static_cast<std::size_t>(hi - raw.begin());
  n.raw_min = *lo;
  n.raw_max = *hi;
  const double range = n.raw_max - n.raw_min;
  std::vector<double> out(raw.size(), 0.0);
  if (range > 0.0) {
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - n.raw_min) / range;
  }
  n.map = DisparityMap(shape, std::move(out));
  return n;
}

std::vector<double> normalize_backward(const NormalizedDisparity& n,
                                       std::span<const double> grad_normalized) {
  const auto d = n.map.data();
  if (grad_normalized.size() != d.size()) throw ShapeError("normalize_backward: gradient size");
  std::vector<double> grad(d.size(), 0.0);
  const double range = n.raw_max - n.raw_min;
  if (!(range > 0.0)) return grad;
  // d_q = (r_q − min) / (max − min)
  double via_min = 0.0;
  double via_max = 0.0;
  for (std::size_t q = 0; q < d.size(); ++q) {
    grad[q] = grad_normalized[q] / range;
    via_min += grad_normalized[q] * (d[q] - 1.0);
    via_max -= grad_normalized[q] * d[q];
  }
  grad[n.argmin] += via_min / range;
  grad[n.argmax] += via_max / range;
  return grad;
}

ImageTensor resize_image(const ImageTensor& image, Shape target) {
  if (image.shape() == target) return image;
  std::vector<double> out(target.area() * 3);
  const double sy = static_cast<double>(image.height()) / target.height;
  const double sx = static_cast<double>(image.width()) / target.width;
  for (int y = 0; y < target.height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height() - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, image.height() - 1);
    const double ay = fy - y0;
    for (int x = 0; x < target.width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width() - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, image.width() - 1);
      const double ax = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = (1 - ax) * image.at(y0, x0, c) + ax * image.at(y0, x1, c);
        const double bottom = (1 - ax) * image.at(y1, x0, c) + ax * image.at(y1, x1, c);
        out[(static_cast<std::size_t>(y) * target.width + x) * 3 + c] = (1 - ay) * top + ay * bottom;
      }
    }
  }
  return ImageTensor(target, std::move(out));
}

std::vector<double> resize_map(Shape from, std::span<const double> values, Shape to) {
  if (from == to) return {values.begin(), values.end()};
  std::vector<double> out(to.area());
  const double sy = static_cast<double>(from.height) / to.height;
  const double sx = static_cast<double>(from.width) / to.width;
  for (int y = 0; y < to.height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, from.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, from.height - 1);
    const double ay = fy - y0;
    for (int x = 0; x < to.width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, from.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, from.width - 1);
      const double ax = fx - x0;
      auto at = [&](int yy, int xx) { return values[static_cast<std::size_t>(yy) * from.width + xx]; };
      const double top = (1 - ax) * at(y0, x0) + ax * at(y0, x1);
      const double bottom = (1 - ax) * at(y1, x0) + ax * at(y1, x1);
      out[static_cast<std::size_t>(y) * to.width + x] = (1 - ay) * top + ay * bottom;
    }
  }
  return out;
}

NormalizedDisparity predict(const DepthModelHandle& handle, const ImageTensor& image) {
  if (!handle.model) throw ConfigError("predict: model handle has no backend");
  if (image.shape() == handle.input_shape) {
    return normalize_disparity(image.shape(), handle.model->predict_raw(image));
  }
  if (!handle.allow_resize) {
    throw ShapeError("model '" + handle.name + "' expects " + to_string(handle.input_shape) +
                     " input, got " + to_string(image.shape()));
  }
  const auto raw = handle.model->predict_raw(resize_image(image, handle.input_shape));
  return normalize_disparity(image.shape(), resize_map(handle.input_shape, raw, image.shape()));
}

DisparityMap forward(const DepthModelHandle& handle, const ImageTensor& image) {
  return predict(handle, image).map;
}

DisparityForward::DisparityForward(const DepthModelHandle& handle, const ImageTensor& image) {
  if (!handle.model) throw ConfigError("forward: model handle has no backend");
  require_same_shape(image.shape(), handle.input_shape, "differentiable forward");
  pass_ = handle.model->forward_pass(image);
  normalized_ = normalize_disparity(image.shape(), pass_->raw());
}

std::vector<double> DisparityForward::backward(std::span<const double> grad_disparity) const {
  return pass_->input_gradient(normalize_backward(normalized_, grad_disparity));
}

ModelRegistry& ModelRegistry::global() {
  static ModelRegistry registry;
  return registry;
}

void ModelRegistry::add(std::string name, ModelFactory factory) {
  std::lock_guard lock(mutex_);
  factories_[std::move(name)] = std::move(factory);
}

bool ModelRegistry::contains(const std::string& name) const {
  std::lock_guard lock(mutex_);
  return factories_.count(name) != 0;
}

std::shared_ptr<const DepthModel> ModelRegistry::create(const std::string& name) const {
  std::lock_guard lock(mutex_);
  const auto it = factories_.find(name);
  if (it == factories_.end()) throw ConfigError("unknown depth model '" + name + "'");
  return it->second();
}

DepthModelHandle load_model(const std::string& spec) {
  const std::filesystem::path path(spec);
  if (std::filesystem::is_directory(path)) return make_handle(load_toy_model(path));
  if (ModelRegistry::global().contains(spec)) return make_handle(ModelRegistry::global().create(spec));
  throw ConfigError("model '" + spec +
                    "' is neither a toy model checkpoint directory nor a registered adapter");
}

}  // namespace depthpatch
