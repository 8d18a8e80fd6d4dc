#pragma once

// Attack evaluation against the clean prediction:
//
//   E_d = Σ(|d − d_adv| ⊙ M_f) / ΣM_f
//   R_a = Σ 1(|d − d_adv| ⊙ M_f > threshold) / ΣM_f
//   MSE = mean over all pixels of (d_adv − d)²

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "depthpatch/core.hpp"
#include "depthpatch/dataset.hpp"
#include "depthpatch/model.hpp"
#include "depthpatch/pipeline.hpp"

namespace depthpatch {

inline constexpr double kAffectedThreshold = 0.1;

// Throw ShapeError when the mask is empty or shapes disagree.
double mean_depth_error(const DisparityMap& d, const DisparityMap& d_adv, const BinaryMask& m_f);
double affected_ratio(const DisparityMap& d, const DisparityMap& d_adv, const BinaryMask& m_f,
                      double threshold = kAffectedThreshold);
double mse(const DisparityMap& d, const DisparityMap& d_adv);

struct EvalRecord {
  std::string image_id;
  double e_d = 0.0;
  double r_a = 0.0;
  double mse = 0.0;
  std::size_t mask_area = 0;
};

struct EvalAggregate {
  double e_d = 0.0;
  double r_a = 0.0;
  double mse = 0.0;
  std::size_t scenes = 0;
};

struct EvalConfig {
  double patch_scale_factor = 0.2;
  // Identity placement unless set; sampled transforms are seeded.
  std::optional<TransformRanges> sampled_transforms;
  std::uint64_t seed = 0;
  // Builds the focus masks but never pastes the patch (no-op attack).
  bool suppress_patch = false;
};

struct EvalResult {
  std::vector<EvalRecord> records;
  EvalAggregate aggregate;
  std::vector<std::string> skipped;  // image ids without a placeable detection
};

// Per-scene metrics for every sample with at least one placeable detection;
// the aggregate is the unweighted mean over scenes. Throws DataError when no
// scene can be evaluated.
EvalResult evaluate_run(const Patch& patch, std::span<const Sample> samples,
                        const DepthModelHandle& model, const EvalConfig& cfg);

EvalAggregate aggregate(std::span<const EvalRecord> records);

}  // namespace depthpatch
