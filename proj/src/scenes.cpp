#include "depthpatch/scenes.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace depthpatch {

namespace {

constexpr double kGroundMaxDisparity = 0.5;

using Color = std::array<double, 3>;

struct Placed {
  int x0, y0, w, h;
  int class_id;
  double disparity;
};

Color random_color(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.1, 0.95);
  Color c{u(rng), u(rng), u(rng)};
  // Push one channel up so objects stay saturated against the gray road.
  c[std::uniform_int_distribution<int>(0, 2)(rng)] = std::uniform_real_distribution<double>(0.75, 1.0)(rng);
  return c;
}

bool overlaps(const Placed& a, const Placed& b) {
  const int margin = 1;
  return a.x0 < b.x0 + b.w + margin && b.x0 < a.x0 + a.w + margin && a.y0 < b.y0 + b.h + margin &&
         b.y0 < a.y0 + a.h + margin;
}

}  // namespace

void SceneSpec::validate() const {
  if (shape.height < 16 || shape.width < 16) throw ConfigError("scene shape must be at least 16x16");
  if (depth_layers < 1) throw ConfigError("depth_layers must be >= 1");
  if (objects.empty()) {
    if (min_objects < 0 || max_objects < min_objects) {
      throw ConfigError("scene object count range is invalid");
    }
  }
  if (pedestrian_fraction < 0.0 || pedestrian_fraction > 1.0) {
    throw ConfigError("pedestrian_fraction must be in [0,1]");
  }
  for (const auto& o : objects) {
    if (o.class_id != kCar && o.class_id != kPedestrian) throw ConfigError("unknown object class");
    if (o.depth_layer < 0 || o.depth_layer >= depth_layers) throw ConfigError("depth layer out of range");
  }
  if (max_placement_attempts < 1) throw ConfigError("max_placement_attempts must be >= 1");
}

double layer_disparity(int layer, int depth_layers) {
  if (depth_layers <= 1) return 1.0;
  // Evenly spaced in (ground max, 1], nearest layer = 1.
  const double step = (1.0 - kGroundMaxDisparity) / depth_layers;
  return 1.0 - step * layer;
}

SyntheticScene generate_scene(std::mt19937_64& rng, const SceneSpec& spec) {
  spec.validate();
  const int H = spec.shape.height;
  const int W = spec.shape.width;
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const int horizon = static_cast<int>(std::lround(H * 0.4)) +
                      std::uniform_int_distribution<int>(-2, 2)(rng);

  const auto draw_objects = [&] {
    std::vector<ObjectSpec> out;
    const int count = std::uniform_int_distribution<int>(spec.min_objects, spec.max_objects)(rng);
    for (int i = 0; i < count; ++i) {
      ObjectSpec o;
      o.class_id = unit(rng) < spec.pedestrian_fraction ? kPedestrian : kCar;
      o.depth_layer = std::uniform_int_distribution<int>(0, spec.depth_layers - 1)(rng);
      out.push_back(o);
    }
    return out;
  };

  // Returns false when some object cannot be placed without overlap.
  const auto place_all = [&](const std::vector<ObjectSpec>& wanted, std::vector<Placed>& placed) {
    placed.clear();
    for (const ObjectSpec& o : wanted) {
      const double disparity = layer_disparity(o.depth_layer, spec.depth_layers);
      // Apparent size grows with disparity; closer objects sit lower in frame.
      int h = 0;
      int w = 0;
      if (o.class_id == kCar) {
        h = std::max(4, static_cast<int>(std::lround(0.36 * H * disparity)));
        w = std::max(6, static_cast<int>(std::lround(1.8 * h)));
      } else {
        h = std::max(6, static_cast<int>(std::lround(0.55 * H * disparity)));
        w = std::max(3, static_cast<int>(std::lround(0.4 * h)));
      }
      const double depth_frac = (disparity - kGroundMaxDisparity) / (1.0 - kGroundMaxDisparity);
      const int base =
          horizon + static_cast<int>(std::lround((H - horizon) * (0.3 + 0.65 * depth_frac)));
      if (w > W || h > H) throw ConfigError("scene object does not fit in the frame");

      bool ok = false;
      for (int attempt = 0; attempt < spec.max_placement_attempts && !ok; ++attempt) {
        const int jitter = std::uniform_int_distribution<int>(-2, 2)(rng);
        const int y1 = std::clamp(base + jitter, h, H);
        const double fx = (o.x_fraction >= 0.0 && attempt == 0) ? o.x_fraction : unit(rng);
        const int x0 = static_cast<int>(std::lround(fx * (W - w)));
        Placed p{x0, y1 - h, w, h, o.class_id, disparity};
        ok = std::none_of(placed.begin(), placed.end(), [&](const Placed& q) { return overlaps(p, q); });
        if (ok) placed.push_back(p);
      }
      if (!ok) return false;
    }
    return true;
  };

  std::vector<Placed> placed;
  if (!spec.objects.empty()) {
    if (!place_all(spec.objects, placed)) {
      throw ConfigError("scene spec is overconstrained: objects cannot be placed without overlap");
    }
  } else {
    // Random object sets are redrawn until one fits.
    bool ok = false;
    for (int draw = 0; draw < spec.max_placement_attempts && !ok; ++draw) {
      ok = place_all(draw_objects(), placed);
    }
    if (!ok) throw ConfigError("scene spec is overconstrained: no object set fits the frame");
  }

  // Background.
  std::vector<double> image(spec.shape.area() * 3);
  std::vector<double> physical(spec.shape.area(), 0.0);
  const Color sky_top{0.35 + 0.1 * unit(rng), 0.55 + 0.1 * unit(rng), 0.85 + 0.1 * unit(rng)};
  const Color sky_low{0.75, 0.82, 0.9};
  const double road_tone = 0.3 + 0.2 * unit(rng);
  std::normal_distribution<double> grain(0.0, 0.02);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * W + x;
      if (y < horizon) {
        const double t = static_cast<double>(y) / std::max(1, horizon);
        for (int c = 0; c < 3; ++c) image[p * 3 + c] = (1 - t) * sky_top[c] + t * sky_low[c];
      } else {
        const double t = static_cast<double>(y - horizon + 1) / (H - horizon);
        physical[p] = kGroundMaxDisparity * t;
        double tone = road_tone * (0.8 + 0.4 * t);
        // Dashed center line, widening toward the camera.
        const double lane_half = 0.5 + 2.0 * t;
        if (std::abs(x + 0.5 - W / 2.0) < lane_half && ((y - horizon) / 3) % 2 == 0) tone = 0.9;
        for (int c = 0; c < 3; ++c) image[p * 3 + c] = tone;
      }
    }
  }

  // Objects, far to near.
  std::vector<std::size_t> order(placed.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return placed[a].disparity < placed[b].disparity; });
  for (const std::size_t idx : order) {
    const Placed& o = placed[idx];
    const Color body = random_color(rng);
    const Color dark{0.08, 0.08, 0.1};
    const Color glass{0.25, 0.3, 0.4};
    const Color skin{0.85, 0.65, 0.5};
    for (int y = o.y0; y < o.y0 + o.h; ++y) {
      for (int x = o.x0; x < o.x0 + o.w; ++x) {
        const double u = (x + 0.5 - o.x0) / o.w;  // 0..1 across the box
        const double v = (y + 0.5 - o.y0) / o.h;
        const Color* color = &body;
        if (o.class_id == kCar) {
          if (v < 0.4 && (u < 0.15 || u > 0.85)) continue;  // cabin is narrower than the body
          if (v > 0.1 && v < 0.35 && u > 0.22 && u < 0.78) color = &glass;
          if (v > 0.82 && ((u > 0.1 && u < 0.3) || (u > 0.7 && u < 0.9))) color = &dark;
        } else {
          const double du = (u - 0.5) / 0.5;
          const double dv = (v - 0.5) / 0.5;
          if (du * du + dv * dv > 1.0) continue;
          if (v < 0.18) color = &skin;
          if (v > 0.6) color = &dark;
        }
        const std::size_t p = static_cast<std::size_t>(y) * W + x;
        for (int c = 0; c < 3; ++c) image[p * 3 + c] = (*color)[c];
        physical[p] = o.disparity;
      }
    }
  }
  for (double& v : image) v += grain(rng);

  const double max_disp = *std::max_element(physical.begin(), physical.end());
  std::vector<double> normalized(physical.size(), 0.0);
  if (max_disp > 0.0) {
    for (std::size_t i = 0; i < physical.size(); ++i) normalized[i] = physical[i] / max_disp;
  }

  SyntheticScene scene{ImageTensor(spec.shape, std::move(image)),
                       DisparityMap(spec.shape, std::move(normalized)),
                       DisparityMap(spec.shape, std::move(physical)),
                       {}};
  for (const Placed& o : placed) {
    scene.objects.push_back(box_from_corners(o.x0, o.y0, o.x0 + o.w, o.y0 + o.h, 1.0, o.class_id));
  }
  return scene;
}

std::vector<SyntheticScene> generate_corpus(std::size_t count, std::uint64_t seed,
                                            const SceneSpec& spec) {
  std::mt19937_64 rng(seed);
  std::vector<SyntheticScene> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(generate_scene(rng, spec));
  return out;
}

}  // namespace depthpatch
