#pragma once
#include <functional>
#include <map>
#include <string>

#include "disp/tensor.hpp"

namespace disp {

// Named parameter registry. Iteration order is lexicographic, which fixes the
// update order for deterministic runs.
struct ParamStore {
  std::map<std::string, Tensor> values;

  Tensor& add(const std::string& name, Tensor init) {
    auto [it, fresh] = values.emplace(name, std::move(init));
    if (!fresh) throw ConfigError("duplicate parameter name: " + name);
    return it->second;
  }
  Tensor& get(const std::string& name) {
    auto it = values.find(name);
    if (it == values.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
  }
  const Tensor& get(const std::string& name) const {
    auto it = values.find(name);
    if (it == values.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
  }
  bool has(const std::string& name) const { return values.count(name) != 0; }
};

struct AdamConfig {
  double lr_max = 1e-3;
  double lr_min = 1e-6;
  int warmup_steps = 1000;
  int total_steps = 10000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Linear warmup from lr_max/warmup, then cosine decay to lr_min. `step` is
// 0-based.
double schedule_lr(const AdamConfig& cfg, int step);

struct OptimizerState {
  AdamConfig cfg;
  int step = 0;
  std::map<std::string, Tensor> m, v;
  // learning-rate multiplier per name prefix (longest match wins; default 1)
  std::map<std::string, double> group_lr_mult;

  double lr_mult_for(const std::string& name) const;
};

// Applies one Adam update with bias correction to every parameter that has a
// gradient and passes `trainable`. NaN gradients abort with the parameter name.
void adam_step(OptimizerState& state, ParamStore& params, const GradMap& grads,
               const std::function<bool(const std::string&)>& trainable = nullptr);

}  // namespace disp
