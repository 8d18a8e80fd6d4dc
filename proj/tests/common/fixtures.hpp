#pragma once

// Random fixtures and brute-force helpers shared by the unit tests.

#include <cstdint>
#include <random>
#include <vector>

#include "depthpatch/core.hpp"

namespace depthpatch::testing {

inline std::vector<double> uniform_values(std::mt19937_64& rng, std::size_t n, double lo = 0.0,
                                          double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

inline ImageTensor random_image(std::mt19937_64& rng, int h, int w) {
  return ImageTensor(h, w, uniform_values(rng, static_cast<std::size_t>(h) * w * 3));
}

inline DisparityMap random_map(std::mt19937_64& rng, int h, int w) {
  return DisparityMap(h, w, uniform_values(rng, static_cast<std::size_t>(h) * w));
}

inline Patch random_patch(std::mt19937_64& rng, int side, double lo = 0.0, double hi = 1.0) {
  return Patch(side, uniform_values(rng, static_cast<std::size_t>(side) * side * 3, lo, hi));
}

inline BinaryMask random_mask(std::mt19937_64& rng, int h, int w, double p = 0.5) {
  std::bernoulli_distribution b(p);
  std::vector<std::uint8_t> v(static_cast<std::size_t>(h) * w);
  for (auto& x : v) x = b(rng) ? 1 : 0;
  return BinaryMask(h, w, std::move(v));
}

inline BinaryMask rect_mask(int h, int w, int y0, int x0, int y1, int x1) {
  std::vector<std::uint8_t> v(static_cast<std::size_t>(h) * w, 0);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) v[static_cast<std::size_t>(y) * w + x] = 1;
  }
  return BinaryMask(h, w, std::move(v));
}

}  // namespace depthpatch::testing
