#include "milora/optim.hpp"

#include <cmath>

#include "milora/errors.hpp"

namespace milora {

AdamW::AdamW(std::vector<Parameter*> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  if (cfg_.lr <= 0.0) throw ConfigError("AdamW: learning rate must be positive");
  if (cfg_.beta1 < 0.0 || cfg_.beta1 >= 1.0 || cfg_.beta2 < 0.0 || cfg_.beta2 >= 1.0)
    throw ConfigError("AdamW: betas must lie in [0, 1)");
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Parameter* p : params_) {
    m_.emplace_back(p->value.rows(), p->value.cols());
    v_.emplace_back(p->value.rows(), p->value.cols());
  }
}

void AdamW::step(double lr_scale) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const double lr = cfg_.lr * lr_scale;
  for (size_t pi = 0; pi < params_.size(); ++pi) {
    Parameter& p = *params_[pi];
    if (!p.trainable) continue;
    if (p.grad.empty()) continue;
    double* w = p.value.data().data();
    const double* g = p.grad.data().data();
    double* m = m_[pi].data().data();
    double* v = v_[pi].data().data();
    const int64_t n = p.value.size();
    for (int64_t i = 0; i < n; ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * w[i]);
    }
  }
}

void AdamW::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

std::vector<Parameter*> filter_group(const std::vector<Parameter*>& all, ParamGroup g) {
  std::vector<Parameter*> out;
  for (Parameter* p : all)
    if (p->trainable && p->group == g) out.push_back(p);
  return out;
}

double warmup_linear_decay(int64_t step, int64_t total_steps, int64_t warmup_steps) {
  if (total_steps <= 0) return 1.0;
  if (warmup_steps > 0 && step < warmup_steps)
    return static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  if (step >= total_steps) return 0.0;
  const double rest = static_cast<double>(total_steps - warmup_steps);
  if (rest <= 0.0) return 1.0;
  return static_cast<double>(total_steps - step) / rest;
}

}  // namespace milora
