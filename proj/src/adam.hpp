#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "autodiff.hpp"

namespace wsnad {

struct AdamOptions {
  double learning_rate = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam. Moments are bound positionally to the parameter list
/// given on the first step; later steps must pass the same list.
class Adam {
 public:
  explicit Adam(AdamOptions options = {});

  /// Applies one update from each parameter's `grad`. If any gradient holds a
  /// non-finite entry nothing is updated and kNonFinite names the parameter.
  void step(std::span<Parameter* const> params);

  std::int64_t steps() const noexcept { return step_; }
  const AdamOptions& options() const noexcept { return options_; }
  const std::vector<Tensor>& first_moments() const noexcept { return m_; }
  const std::vector<Tensor>& second_moments() const noexcept { return v_; }

 private:
  AdamOptions options_;
  std::int64_t step_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace wsnad
