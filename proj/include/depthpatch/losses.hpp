#pragma once

// Penalized depth loss, total variation and their weighted total.
//
//   L_d1    = Σ |d_t − d_adv| ⊙ M_p        / (m·n)
//   L_d2    = Σ |d_t − d_adv| ⊙ (M_f − M_p) / (m·n)
//   L_depth = L_d1² + L_d2
//   L_total = alpha · L_depth + gamma · L_tv

#include <span>
#include <string>
#include <vector>

#include "depthpatch/core.hpp"

namespace depthpatch {

struct LossWeights {
  double alpha = 1.0;  // weight on L_depth
  double gamma = 2.0;  // weight on L_tv
  bool use_d1 = true;
  bool use_d2 = true;
  bool square_d1 = true;

  // Throws ConfigError on negative weights or with both depth terms off.
  void validate() const;
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct LossReport {
  double l_d1 = 0.0;
  double l_d2 = 0.0;
  double l_depth = 0.0;
  double l_tv = 0.0;
  double l_total = 0.0;

  friend bool operator==(const LossReport&, const LossReport&) = default;
};

double depth_loss_d1(const DisparityMap& d_t, const DisparityMap& d_adv, const BinaryMask& m_p);
double depth_loss_d2(const DisparityMap& d_t, const DisparityMap& d_adv, const BinaryMask& m_f,
                     const BinaryMask& m_p);
// Combination of precomputed terms according to the ablation flags.
double combine_depth_terms(double l_d1, double l_d2, const LossWeights& w);
double depth_loss(const DisparityMap& d_t, const DisparityMap& d_adv, const BinaryMask& m_f,
                  const BinaryMask& m_p, const LossWeights& w);

// Σ_c Σ_{i<S−1, j<S−1} sqrt((P[i+1,j]−P[i,j])² + (P[i,j+1]−P[i,j])²), interior
// neighbours only. Throws ShapeError for side < 2.
double tv_loss(const Patch& patch);
// Gradient of tv_loss; subgradient 0 where both differences vanish.
std::vector<double> tv_loss_gradient(const Patch& patch);

LossReport total_loss(double l_d1, double l_d2, double l_tv, const LossWeights& w);

enum class TargetMode { kConstantFar, kBorderFill };

std::string to_string(TargetMode mode);
TargetMode target_mode_from_string(const std::string& name);

// constant_far: 0 inside M_f. border_fill: each pixel inside M_f copies the
// clean disparity of the nearest pixel outside M_f (ties: smallest row, then
// column). Outside M_f the target equals the clean map.
DisparityMap make_target_disparity(const DisparityMap& d_clean, const BinaryMask& m_f,
                                   TargetMode mode);

// Depth terms and dL_depth/dd_adv for one image.
struct DepthLossEval {
  double l_d1 = 0.0;
  double l_d2 = 0.0;
  double l_depth = 0.0;
  std::vector<double> grad;  // H*W
};

DepthLossEval depth_loss_with_gradient(const DisparityMap& d_t, const DisparityMap& d_adv,
                                       const BinaryMask& m_f, const BinaryMask& m_p,
                                       const LossWeights& w);

}  // namespace depthpatch
