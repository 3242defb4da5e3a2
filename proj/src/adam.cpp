#include "adam.hpp"

#include <cmath>

namespace wsnad {

Adam::Adam(AdamOptions options) : options_(options) {
  if (!(options_.learning_rate > 0) || !(options_.beta1 >= 0 && options_.beta1 < 1) ||
      !(options_.beta2 >= 0 && options_.beta2 < 1) || !(options_.epsilon > 0)) {
    fail(ErrorCode::kConfig, "adam: invalid hyperparameters");
  }
}

void Adam::step(std::span<Parameter* const> params) {
  if (m_.empty()) {
    for (const Parameter* p : params) {
      m_.emplace_back(p->value.shape(), 0.0);
      v_.emplace_back(p->value.shape(), 0.0);
    }
  }
  if (params.size() != m_.size()) {
    fail(ErrorCode::kContract, "adam: parameter list changed between steps");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Parameter& p = *params[k];
    if (!p.grad.same_shape(p.value) || !m_[k].same_shape(p.value)) {
      fail(ErrorCode::kDimension, "adam: gradient/moment shape mismatch for " + p.name);
    }
    if (!p.grad.all_finite()) fail(ErrorCode::kNonFinite, "adam: non-finite gradient in " + p.name);
  }

  ++step_;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto value = params[k]->value.data();
    auto grad = params[k]->grad.data();
    auto m = m_[k].data();
    auto v = v_[k].data();
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
      v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      value[i] -= options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.epsilon);
    }
  }
}

}  // namespace wsnad
