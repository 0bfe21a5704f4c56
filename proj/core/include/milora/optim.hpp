#pragma once

#include <vector>

#include "milora/tensor.hpp"

namespace milora {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// Decoupled-weight-decay Adam over an explicit parameter list.  Momentum
// state is owned per instance, so separate optimizers over disjoint parameter
// groups never interact; stepping one leaves the other group's values
// bit-identical.
class AdamW {
 public:
  AdamW(std::vector<Parameter*> params, AdamWConfig cfg);

  // One update from the gradients currently in Parameter::grad.  Gradients
  // are read, never modified.  lr_scale multiplies the configured rate
  // (warmup/decay schedules pass their multiplier here).
  void step(double lr_scale = 1.0);

  void zero_grad();

  const std::vector<Parameter*>& params() const { return params_; }
  int64_t step_count() const { return t_; }

 private:
  std::vector<Parameter*> params_;
  AdamWConfig cfg_;
  std::vector<Tensor> m_, v_;
  int64_t t_ = 0;
};

// Trainable parameters of one group, preserving order.
std::vector<Parameter*> filter_group(const std::vector<Parameter*>& all, ParamGroup g);

// Linear warmup to 1 over warmup_steps, then linear decay to 0 at
// total_steps.  step is 0-based; the first step gets a nonzero rate.
double warmup_linear_decay(int64_t step, int64_t total_steps, int64_t warmup_steps);

}  // namespace milora
