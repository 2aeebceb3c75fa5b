#pragma once

#include "jdm/tensor.hpp"

namespace jdm {

/// Per-parameter Adam accumulators.
struct OptimState {
  std::vector<Array> first_moment;
  std::vector<Array> second_moment;
  long step_count = 0;
};

/// One bias-corrected Adam update. Reads each parameter's accumulated
/// gradient and mutates the parameter data in place.
void adam_step(std::vector<Tensor>& params, OptimState& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

/// Convenience owner: parameters + state + hyperparameters.
class Adam {
 public:
  Adam(std::vector<Tensor> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }
  void step() { adam_step(params_, state_, lr_, beta1_, beta2_, eps_); }
  const OptimState& state() const { return state_; }
  std::vector<Tensor>& params() { return params_; }

 private:
  std::vector<Tensor> params_;
  OptimState state_;
  double lr_, beta1_, beta2_, eps_;
};

}  // namespace jdm
