#include "depthpatch/optim.hpp"

#include <cmath>

#include "depthpatch/errors.hpp"

namespace depthpatch {

Adam::Adam(std::size_t size, AdamParams params) : params_(params), m_(size, 0.0), v_(size, 0.0) {}

Adam::Adam(AdamParams params, std::vector<double> m, std::vector<double> v, std::int64_t step)
    : params_(params), m_(std::move(m)), v_(std::move(v)), step_(step) {
  if (m_.size() != v_.size()) throw ShapeError("Adam: moment sizes differ");
}

void Adam::step(std::span<double> values, std::span<const double> grad, double learning_rate) {
  if (values.size() != m_.size() || grad.size() != m_.size()) {
    throw ShapeError("Adam::step: size mismatch");
  }
  ++step_;
  const double b1 = params_.beta1;
  const double b2 = params_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < values.size(); ++i) {
    m_[i] = b1 * m_[i] + (1.0 - b1) * grad[i];
    v_[i] = b2 * v_[i] + (1.0 - b2) * grad[i] * grad[i];
    const double m_hat = m_[i] / correction1;
    const double v_hat = v_[i] / correction2;
    values[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + params_.epsilon);
  }
}

}  // namespace depthpatch
