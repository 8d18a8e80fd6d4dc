#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "depthpatch/optim.hpp"
#include "fixtures.hpp"

using namespace depthpatch;
using depthpatch::testing::uniform_values;

TEST(Adam, MatchesReferenceRecurrence) {
  std::mt19937_64 rng(1);
  const AdamParams hp{0.8, 0.95, 1e-6};
  std::vector<double> x = uniform_values(rng, 7), ref = x;
  std::vector<double> m(7, 0.0), v(7, 0.0);
  Adam adam(7, hp);
  for (int t = 1; t <= 6; ++t) {
    const auto g = uniform_values(rng, 7, -2, 2);
    adam.step(x, g, 0.05);
    for (std::size_t i = 0; i < 7; ++i) {
      m[i] = hp.beta1 * m[i] + (1 - hp.beta1) * g[i];
      v[i] = hp.beta2 * v[i] + (1 - hp.beta2) * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(hp.beta1, t));
      const double vh = v[i] / (1 - std::pow(hp.beta2, t));
      ref[i] -= 0.05 * mh / (std::sqrt(vh) + hp.epsilon);
    }
    for (std::size_t i = 0; i < 7; ++i) EXPECT_NEAR(x[i], ref[i], 1e-14);
  }
  EXPECT_EQ(adam.steps(), 6);
}

TEST(Adam, ZeroGradientLeavesValues) {
  std::vector<double> x{0.1, 0.2};
  Adam adam(2);
  adam.step(x, std::vector<double>{0.0, 0.0}, 0.1);
  EXPECT_EQ(x, (std::vector<double>{0.1, 0.2}));
}

TEST(Adam, RestoredStateContinuesIdentically) {
  std::mt19937_64 rng(2);
  std::vector<double> a = uniform_values(rng, 5), b;
  Adam first(5);
  for (int t = 0; t < 3; ++t) first.step(a, uniform_values(rng, 5, -1, 1), 0.01);
  Adam copy(first.params(), first.first_moment(), first.second_moment(), first.steps());
  EXPECT_EQ(copy, first);
  b = a;
  const auto g = uniform_values(rng, 5, -1, 1);
  first.step(a, g, 0.01);
  copy.step(b, g, 0.01);
  EXPECT_EQ(a, b);
}

TEST(Adam, RejectsSizeMismatch) {
  Adam adam(3);
  std::vector<double> x(3);
  EXPECT_THROW(adam.step(x, std::vector<double>(2), 0.1), ShapeError);
}
