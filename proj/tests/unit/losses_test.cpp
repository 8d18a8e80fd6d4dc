#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "depthpatch/losses.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace depthpatch;
using namespace depthpatch::testing;

namespace {

// Nested masks: a random focus mask and a random subset of it.
std::pair<BinaryMask, BinaryMask> nested_masks(std::mt19937_64& rng, int h, int w) {
  const BinaryMask f = random_mask(rng, h, w, 0.6);
  const BinaryMask sub = random_mask(rng, h, w, 0.5);
  std::vector<std::uint8_t> p(f.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = (f[i] && sub[i]) ? 1 : 0;
  return {f, BinaryMask(h, w, std::move(p))};
}

}  // namespace

TEST(DepthLossD1, Examples) {
  std::mt19937_64 rng(1);
  const DisparityMap a = random_map(rng, 8, 8);
  EXPECT_EQ(depth_loss_d1(a, a, BinaryMask(8, 8, true)), 0.0);
  EXPECT_DOUBLE_EQ(depth_loss_d1(DisparityMap(8, 8, 1.0), DisparityMap(8, 8, 0.0), rect_mask(8, 8, 0, 0, 4, 4)), 0.25);
  EXPECT_EQ(depth_loss_d1(DisparityMap(8, 8, 1.0), DisparityMap(8, 8, 0.0), BinaryMask(8, 8)), 0.0);
}

TEST(DepthLossD2, Examples) {
  std::mt19937_64 rng(2);
  const DisparityMap a = random_map(rng, 8, 8), b = random_map(rng, 8, 8);
  const BinaryMask f = rect_mask(8, 8, 2, 2, 6, 6);
  EXPECT_EQ(depth_loss_d2(a, b, f, f), 0.0);
  EXPECT_EQ(depth_loss_d2(a, a, f, BinaryMask(8, 8)), 0.0);
  // Ring = top half of the image.
  EXPECT_DOUBLE_EQ(depth_loss_d2(DisparityMap(8, 8, 1.0), DisparityMap(8, 8, 0.0), rect_mask(8, 8, 0, 0, 5, 8),
                                 rect_mask(8, 8, 4, 0, 5, 8)),
                   0.5);
}

TEST(DepthLossTerms, MatchScalarLoops) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const DisparityMap t = random_map(rng, 16, 16), a = random_map(rng, 16, 16);
    const auto [f, p] = nested_masks(rng, 16, 16);
    EXPECT_NEAR(depth_loss_d1(t, a, p), loop_d1(t, a, p), 1e-12);
    EXPECT_NEAR(depth_loss_d2(t, a, f, p), loop_d2(t, a, f, p), 1e-12);
  }
}

TEST(DepthLoss, CombinationExamples) {
  EXPECT_DOUBLE_EQ(combine_depth_terms(0.5, 0.3, LossWeights{}), 0.55);
  LossWeights no_d2;
  no_d2.use_d2 = false;
  EXPECT_DOUBLE_EQ(combine_depth_terms(0.5, 0.3, no_d2), 0.25);
  LossWeights linear;
  linear.square_d1 = false;
  EXPECT_DOUBLE_EQ(combine_depth_terms(0.5, 0.3, linear), 0.8);
  std::mt19937_64 rng(4);
  const DisparityMap a = random_map(rng, 8, 8);
  const auto [f, p] = nested_masks(rng, 8, 8);
  EXPECT_EQ(depth_loss(a, a, f, p, LossWeights{}), 0.0);
}

TEST(LossWeights, Validation) {
  LossWeights w;
  w.use_d1 = w.use_d2 = false;
  EXPECT_THROW(w.validate(), ConfigError);
  w = {};
  w.gamma = -1.0;
  EXPECT_THROW(w.validate(), ConfigError);
}

TEST(TvLoss, ConstantPatchIsZero) { EXPECT_EQ(tv_loss(Patch(5, std::vector<double>(75, 0.3))), 0.0); }

TEST(TvLoss, TwoByTwoInteriorOnly) {
  // Channel 0 = [[0,1],[0,1]], other channels constant.
  std::vector<double> v(12, 0.0);
  v[1 * 3] = 1.0;
  v[3 * 3] = 1.0;
  EXPECT_DOUBLE_EQ(tv_loss(Patch(2, v)), 1.0);
}

TEST(TvLoss, MatchesDoubleLoopAndRejectsSideOne) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Patch p = random_patch(rng, 16);
    EXPECT_NEAR(tv_loss(p), loop_tv(p), 1e-10);
  }
  EXPECT_THROW(tv_loss(Patch(1, std::vector<double>(3))), ShapeError);
}

TEST(TvLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(6);
  const Patch p = random_patch(rng, 6, 0.2, 0.8);
  const auto g = tv_loss_gradient(p);
  const double h = 1e-6;
  for (std::size_t i = 0; i < g.size(); ++i) {
    std::vector<double> plus(p.data().begin(), p.data().end()), minus = plus;
    plus[i] += h;
    minus[i] -= h;
    EXPECT_NEAR(g[i], (tv_loss(Patch(6, plus)) - tv_loss(Patch(6, minus))) / (2 * h), 1e-5) << i;
  }
  for (double v : tv_loss_gradient(Patch(4, std::vector<double>(48, 0.5)))) EXPECT_EQ(v, 0.0);
}

TEST(TotalLoss, Examples) {
  EXPECT_DOUBLE_EQ(total_loss(0.0, 0.4, 0.05, LossWeights{}).l_total, 0.5);
  EXPECT_EQ(total_loss(0.0, 0.0, 0.0, LossWeights{}).l_total, 0.0);
  LossWeights w;
  w.gamma = 0.0;
  w.alpha = 3.0;
  const LossReport r = total_loss(0.2, 0.1, 7.0, w);
  EXPECT_DOUBLE_EQ(r.l_total, 3.0 * r.l_depth);
}

TEST(TargetDisparity, ConstantFar) {
  std::mt19937_64 rng(7);
  const DisparityMap d = random_map(rng, 8, 10);
  EXPECT_EQ(make_target_disparity(d, BinaryMask(8, 10), TargetMode::kConstantFar), d);
  const BinaryMask box = rect_mask(8, 10, 2, 3, 6, 7);
  const DisparityMap t = make_target_disparity(d, box, TargetMode::kConstantFar);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 10; ++x) EXPECT_EQ(t.at(y, x), box.at(y, x) ? 0.0 : d.at(y, x));
  }
}

TEST(TargetDisparity, BorderFillOnVerticalGradient) {
  std::vector<double> v(12 * 12);
  for (int y = 0; y < 12; ++y) {
    for (int x = 0; x < 12; ++x) v[y * 12 + x] = y / 11.0;
  }
  const DisparityMap d(12, 12, v);
  const DisparityMap t = make_target_disparity(d, rect_mask(12, 12, 4, 3, 8, 9), TargetMode::kBorderFill);
  // Upper rows copy row 3 and lower rows copy row 8 wherever the vertical
  // neighbour is strictly nearest.
  for (int x = 4; x < 8; ++x) {
    EXPECT_EQ(t.at(4, x), d.at(3, x));
    EXPECT_EQ(t.at(7, x), d.at(8, x));
  }
  for (int x = 5; x < 7; ++x) {
    EXPECT_EQ(t.at(5, x), d.at(3, x));
    EXPECT_EQ(t.at(6, x), d.at(8, x));
  }
}

TEST(TargetDisparity, BorderFillMatchesExhaustiveNearestSearch) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const DisparityMap d = random_map(rng, 12, 14);
    const BinaryMask m = random_mask(rng, 12, 14, 0.4);
    const DisparityMap t = make_target_disparity(d, m, TargetMode::kBorderFill);
    for (int y = 0; y < 12; ++y) {
      for (int x = 0; x < 14; ++x) {
        if (!m.at(y, x)) {
          EXPECT_EQ(t.at(y, x), d.at(y, x));
          continue;
        }
        long best = std::numeric_limits<long>::max();
        double value = 0.0;
        for (int yy = 0; yy < 12; ++yy) {
          for (int xx = 0; xx < 14; ++xx) {
            if (m.at(yy, xx)) continue;
            const long dist = (yy - y) * (yy - y) + (xx - x) * (xx - x);
            if (dist < best) {
              best = dist;
              value = d.at(yy, xx);
            }
          }
        }
        EXPECT_EQ(t.at(y, x), value);
      }
    }
  }
}

TEST(TargetMode, NamesRoundTrip) {
  EXPECT_EQ(target_mode_from_string(to_string(TargetMode::kBorderFill)), TargetMode::kBorderFill);
  EXPECT_EQ(target_mode_from_string(to_string(TargetMode::kConstantFar)), TargetMode::kConstantFar);
  EXPECT_THROW(target_mode_from_string("nearest"), ConfigError);
}

TEST(DepthLossWithGradient, ValueAndFiniteDifferences) {
  std::mt19937_64 rng(9);
  for (const bool square : {true, false}) {
    LossWeights w;
    w.square_d1 = square;
    const DisparityMap t = random_map(rng, 10, 10);
    const DisparityMap a = random_map(rng, 10, 10);
    const auto [f, p] = nested_masks(rng, 10, 10);
    const DepthLossEval e = depth_loss_with_gradient(t, a, f, p, w);
    EXPECT_NEAR(e.l_depth, depth_loss(t, a, f, p, w), 1e-14);
    const double h = 1e-7;
    for (std::size_t i = 0; i < e.grad.size(); ++i) {
      std::vector<double> plus(a.values()), minus(a.values());
      plus[i] += h;
      minus[i] -= h;
      if (plus[i] > 1.0 || minus[i] < 0.0) continue;
      const double fd = (depth_loss(t, DisparityMap(10, 10, plus), f, p, w) -
                         depth_loss(t, DisparityMap(10, 10, minus), f, p, w)) / (2 * h);
      EXPECT_NEAR(e.grad[i], fd, 1e-6) << i;
    }
  }
}
