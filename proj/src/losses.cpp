#include "depthpatch/losses.hpp"

#include <cmath>
#include <limits>

namespace depthpatch {

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

void LossWeights::validate() const {
  if (!(alpha >= 0.0) || !(gamma >= 0.0)) throw ConfigError("loss weights must be non-negative");
  if (!use_d1 && !use_d2) throw ConfigError("at least one of use_d1/use_d2 must be enabled");
}

double depth_loss_d1(const DisparityMap& d_t, const DisparityMap& d_adv, const BinaryMask& m_p) {
  return masked_mean_abs_diff(d_t, d_adv, m_p, Denominator::kFullArea);
}

double depth_loss_d2(const DisparityMap& d_t, const DisparityMap& d_adv, const BinaryMask& m_f,
                     const BinaryMask& m_p) {
  return masked_mean_abs_diff(d_t, d_adv, mask_difference(m_f, m_p), Denominator::kFullArea);
}

double combine_depth_terms(double l_d1, double l_d2, const LossWeights& w) {
  w.validate();
  double out = 0.0;
  if (w.use_d1) out += w.square_d1 ? l_d1 * l_d1 : l_d1;
  if (w.use_d2) out += l_d2;
  return out;
}

double depth_loss(const DisparityMap& d_t, const DisparityMap& d_adv, const BinaryMask& m_f,
                  const BinaryMask& m_p, const LossWeights& w) {
  return combine_depth_terms(depth_loss_d1(d_t, d_adv, m_p), depth_loss_d2(d_t, d_adv, m_f, m_p),
                             w);
}

double tv_loss(const Patch& patch) {
  const int S = patch.side();
  if (S < 2) throw ShapeError("tv_loss: patch side must be >= 2");
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i + 1 < S; ++i) {
      for (int j = 0; j + 1 < S; ++j) {
        const double p = patch.at(i, j, c);
        const double down = patch.at(i + 1, j, c) - p;
        const double right = patch.at(i, j + 1, c) - p;
        total += std::sqrt(down * down + right * right);
      }
    }
  }
  return total;
}

std::vector<double> tv_loss_gradient(const Patch& patch) {
  const int S = patch.side();
  if (S < 2) throw ShapeError("tv_loss_gradient: patch side must be >= 2");
  std::vector<double> grad(patch.data().size(), 0.0);
  const auto& px = patch.pixels();
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i + 1 < S; ++i) {
      for (int j = 0; j + 1 < S; ++j) {
        const double p = px.at(i, j, c);
        const double down = px.at(i + 1, j, c) - p;
        const double right = px.at(i, j + 1, c) - p;
        const double norm = std::sqrt(down * down + right * right);
        if (norm == 0.0) continue;
        grad[px.index(i + 1, j, c)] += down / norm;
        grad[px.index(i, j + 1, c)] += right / norm;
        grad[px.index(i, j, c)] -= (down + right) / norm;
      }
    }
  }
  return grad;
}

LossReport total_loss(double l_d1, double l_d2, double l_tv, const LossWeights& w) {
  LossReport r;
  r.l_d1 = l_d1;
  r.l_d2 = l_d2;
  r.l_depth = combine_depth_terms(l_d1, l_d2, w);
  r.l_tv = l_tv;
  r.l_total = w.alpha * r.l_depth + w.gamma * l_tv;
  return r;
}

std::string to_string(TargetMode mode) {
  return mode == TargetMode::kConstantFar ? "constant_far" : "border_fill";
}

TargetMode target_mode_from_string(const std::string& name) {
  if (name == "constant_far") return TargetMode::kConstantFar;
  if (name == "border_fill") return TargetMode::kBorderFill;
  throw ConfigError("unknown target mode '" + name + "'");
}

DisparityMap make_target_disparity(const DisparityMap& d_clean, const BinaryMask& m_f,
                                   TargetMode mode) {
  require_same_shape(d_clean.shape(), m_f.shape(), "make_target_disparity");
  const int H = d_clean.height();
  const int W = d_clean.width();
  std::vector<double> out(d_clean.values());

  if (mode == TargetMode::kConstantFar) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (m_f[i]) out[i] = 0.0;
    }
    return DisparityMap(d_clean.shape(), std::move(out));
  }

  // The nearest outside pixel always touches the mask, so only the outside
  // boundary needs to be searched.
  std::vector<std::pair<int, int>> boundary;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (m_f.at(y, x)) continue;
      const bool touches = (y > 0 && m_f.at(y - 1, x)) || (y + 1 < H && m_f.at(y + 1, x)) ||
                           (x > 0 && m_f.at(y, x - 1)) || (x + 1 < W && m_f.at(y, x + 1));
      if (touches) boundary.emplace_back(y, x);
    }
  }
  if (boundary.empty()) {
    if (m_f.count() == 0) return d_clean;
    throw ShapeError("make_target_disparity: border_fill needs background outside the focus mask");
  }
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (!m_f.at(y, x)) continue;
      long best = std::numeric_limits<long>::max();
      std::pair<int, int> pick{0, 0};
      for (const auto& [by, bx] : boundary) {
        const long d2 = static_cast<long>(by - y) * (by - y) + static_cast<long>(bx - x) * (bx - x);
        if (d2 < best) {  // boundary is row-major, so first hit wins ties
          best = d2;
          pick = {by, bx};
        }
      }
      out[static_cast<std::size_t>(y) * W + x] = d_clean.at(pick.first, pick.second);
    }
  }
  return DisparityMap(d_clean.shape(), std::move(out));
}

DepthLossEval depth_loss_with_gradient(const DisparityMap& d_t, const DisparityMap& d_adv,
                                       const BinaryMask& m_f, const BinaryMask& m_p,
                                       const LossWeights& w) {
  w.validate();
  require_same_shape(d_t.shape(), d_adv.shape(), "depth_loss");
  require_same_shape(d_t.shape(), m_f.shape(), "depth_loss");
  const BinaryMask ring = mask_difference(m_f, m_p);

  DepthLossEval out;
  const auto t = d_t.data();
  const auto a = d_adv.data();
  const double area = static_cast<double>(d_t.shape().area());
  double sum_d1 = 0.0;
  double sum_d2 = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (m_p[i]) sum_d1 += std::abs(t[i] - a[i]);
    if (ring[i]) sum_d2 += std::abs(t[i] - a[i]);
  }
  out.l_d1 = sum_d1 / area;
  out.l_d2 = sum_d2 / area;
  out.l_depth = combine_depth_terms(out.l_d1, out.l_d2, w);

  const double c1 = w.use_d1 ? (w.square_d1 ? 2.0 * out.l_d1 : 1.0) : 0.0;
  const double c2 = w.use_d2 ? 1.0 : 0.0;
  out.grad.assign(t.size(), 0.0);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double coeff = m_p[i] ? c1 : (ring[i] ? c2 : 0.0);
    if (coeff != 0.0) out.grad[i] = coeff * sign(a[i] - t[i]) / area;
  }
  return out;
}

}  // namespace depthpatch
