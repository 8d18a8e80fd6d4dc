#pragma once

// Synthetic road scenes with exact ground truth: a sky/ground background with
// a disparity ramp below the horizon, and textured cars (rectangles) and
// pedestrians (ellipses) standing on the ground at discrete depth layers.

#include <cstdint>
#include <random>
#include <vector>

#include "depthpatch/core.hpp"

namespace depthpatch {

enum ObjectClass : int { kCar = 0, kPedestrian = 1 };

struct ObjectSpec {
  int class_id = kCar;
  int depth_layer = 0;  // 0 = nearest
  // Left edge as a fraction of the free horizontal range; negative = random.
  double x_fraction = -1.0;
};

struct SceneSpec {
  Shape shape{64, 128};
  int min_objects = 1;
  int max_objects = 3;
  double pedestrian_fraction = 0.3;
  int depth_layers = 4;
  int max_placement_attempts = 200;
  // When non-empty, exactly these objects are placed (min/max ignored).
  std::vector<ObjectSpec> objects;

  // Throws ConfigError on an invalid spec.
  void validate() const;
};

struct SyntheticScene {
  ImageTensor image;
  // Per-image normalized ground truth (0 farthest, 1 closest).
  DisparityMap true_disparity;
  // Unnormalized scene disparity; layer values do not depend on the scene.
  DisparityMap physical_disparity;
  std::vector<BBox> objects;
};

// Disparity assigned to objects on `layer` (layer 0 is the closest).
double layer_disparity(int layer, int depth_layers);

// Throws ConfigError when the objects cannot be placed without overlap.
SyntheticScene generate_scene(std::mt19937_64& rng, const SceneSpec& spec);
std::vector<SyntheticScene> generate_corpus(std::size_t count, std::uint64_t seed,
                                            const SceneSpec& spec);

}  // namespace depthpatch
