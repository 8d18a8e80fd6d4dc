#include "depthpatch/metrics.hpp"

#include <spdlog/spdlog.h>

#include <random>

namespace depthpatch {

double mean_depth_error(const DisparityMap& d, const DisparityMap& d_adv, const BinaryMask& m_f) {
  return masked_mean_abs_diff(d, d_adv, m_f, Denominator::kMaskArea);
}

double affected_ratio(const DisparityMap& d, const DisparityMap& d_adv, const BinaryMask& m_f,
                      double threshold) {
  require_same_shape(d.shape(), d_adv.shape(), "affected_ratio");
  require_same_shape(d.shape(), m_f.shape(), "affected_ratio");
  const auto a = d.data();
  const auto b = d_adv.data();
  std::size_t area = 0;
  std::size_t affected = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!m_f[i]) continue;
    ++area;
    if (std::abs(a[i] - b[i]) > threshold) ++affected;
  }
  if (area == 0) throw ShapeError("affected_ratio: empty mask");
  return static_cast<double>(affected) / static_cast<double>(area);
}

double mse(const DisparityMap& d, const DisparityMap& d_adv) {
  require_same_shape(d.shape(), d_adv.shape(), "mse");
  const auto a = d.data();
  const auto b = d_adv.data();
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += (b[i] - a[i]) * (b[i] - a[i]);
  return sum / static_cast<double>(a.size());
}

EvalAggregate aggregate(std::span<const EvalRecord> records) {
  EvalAggregate out;
  out.scenes = records.size();
  if (records.empty()) return out;
  for (const auto& r : records) {
    out.e_d += r.e_d;
    out.r_a += r.r_a;
    out.mse += r.mse;
  }
  const double n = static_cast<double>(records.size());
  out.e_d /= n;
  out.r_a /= n;
  out.mse /= n;
  return out;
}

EvalResult evaluate_run(const Patch& patch, std::span<const Sample> samples,
                        const DepthModelHandle& model, const EvalConfig& cfg) {
  EvalResult result;
  std::mt19937_64 rng(cfg.seed);
  for (const Sample& s : samples) {
    const auto& boxes = s.detections.boxes;
    std::vector<TransformSample> transforms;
    for (std::size_t k = 0; k < boxes.size(); ++k) {
      transforms.push_back(cfg.sampled_transforms
                               ? sample_transform(rng, *cfg.sampled_transforms, patch.side())
                               : identity_transform());
    }
    const PatchApplication app(patch, s.image, boxes, transforms, cfg.patch_scale_factor);
    if (!app.any_placed()) {
      result.skipped.push_back(s.image_id);
      continue;
    }
    const AdversarialExample& ex = app.example();
    const DisparityMap d = forward(model, s.image);
    const DisparityMap d_adv = cfg.suppress_patch ? d : forward(model, ex.image);
    EvalRecord r;
    r.image_id = s.image_id;
    r.e_d = mean_depth_error(d, d_adv, ex.focus_union);
    r.r_a = affected_ratio(d, d_adv, ex.focus_union);
    r.mse = mse(d, d_adv);
    r.mask_area = ex.focus_union.count();
    result.records.push_back(std::move(r));
  }
  if (result.records.empty()) throw DataError("evaluate_run: no scene has a placeable detection");
  if (!result.skipped.empty()) {
    spdlog::warn("evaluate_run: {} scene(s) without a placeable detection", result.skipped.size());
  }
  result.aggregate = aggregate(result.records);
  return result;
}

}  // namespace depthpatch
