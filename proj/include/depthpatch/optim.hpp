#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace depthpatch {

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const AdamParams&, const AdamParams&) = default;
};

// First/second moment estimates with bias correction.
class Adam {
 public:
  Adam() = default;
  Adam(std::size_t size, AdamParams params = {});
  Adam(AdamParams params, std::vector<double> m, std::vector<double> v, std::int64_t step);

  void step(std::span<double> values, std::span<const double> grad, double learning_rate);

  [[nodiscard]] const AdamParams& params() const { return params_; }
  [[nodiscard]] const std::vector<double>& first_moment() const { return m_; }
  [[nodiscard]] const std::vector<double>& second_moment() const { return v_; }
  [[nodiscard]] std::int64_t steps() const { return step_; }

  friend bool operator==(const Adam&, const Adam&) = default;

 private:
  AdamParams params_{};
  std::vector<double> m_;
  std::vector<double> v_;
  std::int64_t step_ = 0;
};

}  // namespace depthpatch
