#include "disp/adam.hpp"

#include <cmath>

namespace disp {

double schedule_lr(const AdamConfig& cfg, int step) {
  if (cfg.warmup_steps > 0 && step < cfg.warmup_steps)
    return cfg.lr_max * (step + 1) / cfg.warmup_steps;
  const int decay_span = std::max(1, cfg.total_steps - cfg.warmup_steps);
  const double t = std::min(1.0, static_cast<double>(step - cfg.warmup_steps) / decay_span);
  return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(M_PI * t));
}

double OptimizerState::lr_mult_for(const std::string& name) const {
  double mult = 1.0;
  size_t best = 0;
  for (const auto& [prefix, m] : group_lr_mult) {
    if (name.rfind(prefix, 0) == 0 && prefix.size() >= best) {
      best = prefix.size();
      mult = m;
    }
  }
  return mult;
}

void adam_step(OptimizerState& state, ParamStore& params, const GradMap& grads,
               const std::function<bool(const std::string&)>& trainable) {
  const double lr = schedule_lr(state.cfg, state.step);
  const double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
  const double bc1 = 1.0 - std::pow(b1, state.step + 1);
  const double bc2 = 1.0 - std::pow(b2, state.step + 1);

  for (auto& [name, p] : params.values) {
    if (trainable && !trainable(name)) continue;
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const Tensor& g = git->second;
    if (!g.same_shape(p))
      throw ShapeError("adam_step: gradient shape " + g.shape_str() + " vs parameter " +
                       p.shape_str() + " for " + name);
    if (!g.all_finite()) throw NumericError("adam_step: non-finite gradient for parameter " + name);

    Tensor& m = state.m.try_emplace(name, Tensor(p.shape)).first->second;
    Tensor& v = state.v.try_emplace(name, Tensor(p.shape)).first->second;
    const double eff_lr = lr * state.lr_mult_for(name);
    for (size_t i = 0; i < p.data.size(); ++i) {
      m.data[i] = b1 * m.data[i] + (1.0 - b1) * g.data[i];
      v.data[i] = b2 * v.data[i] + (1.0 - b2) * g.data[i] * g.data[i];
      const double mh = m.data[i] / bc1;
      const double vh = v.data[i] / bc2;
      p.data[i] -= eff_lr * mh / (std::sqrt(vh) + state.cfg.eps);
    }
  }
  ++state.step;
}

}  // namespace disp
