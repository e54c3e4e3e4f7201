#include "disp/init_buffer.hpp"

#include <cmath>
#include <cstdio>

namespace disp {

std::string init_strategy_name(InitStrategy s) {
  switch (s) {
    case InitStrategy::None: return "none";
    case InitStrategy::Uniform: return "uniform";
    case InitStrategy::Gaussian: return "gaussian";
    case InitStrategy::Buffer: return "buffer";
  }
  throw ConfigError("bad InitStrategy");
}

InitStrategy init_strategy_from_name(const std::string& s) {
  if (s == "none") return InitStrategy::None;
  if (s == "uniform") return InitStrategy::Uniform;
  if (s == "gaussian") return InitStrategy::Gaussian;
  if (s == "buffer") return InitStrategy::Buffer;
  throw ConfigError("unknown init strategy '" + s + "'");
}

InitBuffer::InitBuffer(std::vector<ParamSpec> specs, int capacity, double ma_decay)
    : specs_(std::move(specs)), capacity_(capacity), ma_decay_(ma_decay) {
  if (capacity_ < 1) throw ConfigError("InitBuffer capacity must be >= 1");
  for (const ParamSpec& s : specs_) s.validate();
  mean_.assign(specs_.size(), 0.0);
  m2_.assign(specs_.size(), 0.0);
  moving_avg_.assign(specs_.size(), 0.0);
}

double InitBuffer::clamp_into(double v, const ParamSpec& spec) const {
  const double nudge = 1e-6 * (spec.p_max - spec.p_min);
  return std::min(spec.p_max - nudge, std::max(spec.p_min + nudge, v));
}

void InitBuffer::push(const std::vector<double>& params) {
  if (params.size() != specs_.size())
    throw ShapeError("InitBuffer: expected " + std::to_string(specs_.size()) + " parameters, got " +
                     std::to_string(params.size()));
  std::vector<double> row(params.size());
  for (size_t i = 0; i < params.size(); ++i) {
    if (!std::isfinite(params[i]))
      throw DomainError("InitBuffer: non-finite value for parameter '" + specs_[i].name + "'");
    // saturated activations can land exactly on a bound; store strictly inside
    row[i] = clamp_into(params[i], specs_[i]);
  }

  ring_.push_back(row);
  if (static_cast<int>(ring_.size()) > capacity_) ring_.pop_front();

  ++push_count_;
  for (size_t i = 0; i < row.size(); ++i) {
    const double d = row[i] - mean_[i];
    mean_[i] += d / push_count_;
    m2_[i] += d * (row[i] - mean_[i]);
    if (push_count_ == 1) {
      moving_avg_[i] = row[i];
    } else {
      moving_avg_[i] = ma_decay_ * moving_avg_[i] + (1.0 - ma_decay_) * row[i];
    }
  }
}

std::vector<double> InitBuffer::running_mean() const { return mean_; }

std::vector<double> InitBuffer::running_variance() const {
  std::vector<double> v(specs_.size(), 0.0);
  if (push_count_ > 1)
    for (size_t i = 0; i < v.size(); ++i) v[i] = m2_[i] / push_count_;
  return v;
}

std::vector<double> InitBuffer::sample(InitStrategy strategy,
                                       const std::vector<double>& p_hat_values,
                                       std::mt19937_64& rng) const {
  if ((strategy == InitStrategy::Buffer || strategy == InitStrategy::Gaussian) && ring_.empty()) {
    static bool warned = false;
    if (!warned) {
      std::fprintf(stderr, "[init_buffer] empty buffer, falling back to uniform sampling\n");
      warned = true;
    }
    strategy = InitStrategy::Uniform;
  }

  std::vector<double> out(specs_.size());
  switch (strategy) {
    case InitStrategy::None: {
      if (p_hat_values.size() != specs_.size())
        throw ShapeError("InitBuffer: p_hat vector size mismatch");
      for (size_t i = 0; i < out.size(); ++i) out[i] = clamp_into(p_hat_values[i], specs_[i]);
      break;
    }
    case InitStrategy::Uniform: {
      for (size_t i = 0; i < out.size(); ++i) {
        std::uniform_real_distribution<double> ud(specs_[i].p_min, specs_[i].p_max);
        out[i] = clamp_into(ud(rng), specs_[i]);
      }
      break;
    }
    case InitStrategy::Gaussian: {
      const std::vector<double> var = running_variance();
      for (size_t i = 0; i < out.size(); ++i) {
        double v = mean_[i];
        if (var[i] > 0.0) {
          std::normal_distribution<double> nd(0.0, std::sqrt(var[i]));
          v += nd(rng);
        }
        out[i] = clamp_into(v, specs_[i]);
      }
      break;
    }
    case InitStrategy::Buffer: {
      std::uniform_int_distribution<size_t> idx(0, ring_.size() - 1);
      out = ring_[idx(rng)];
      break;
    }
  }
  return out;
}

std::vector<double> InitBuffer::inference_initial(const std::vector<double>& p_hat_values) const {
  std::vector<double> out(specs_.size());
  if (push_count_ == 0) {
    if (p_hat_values.size() != specs_.size())
      throw ShapeError("InitBuffer: p_hat vector size mismatch");
    for (size_t i = 0; i < out.size(); ++i) out[i] = clamp_into(p_hat_values[i], specs_[i]);
  } else {
    for (size_t i = 0; i < out.size(); ++i) out[i] = clamp_into(moving_avg_[i], specs_[i]);
  }
  return out;
}

void InitBuffer::restore(std::deque<std::vector<double>> ring, std::vector<double> mean,
                         std::vector<double> m2, std::vector<double> moving_avg,
                         int64_t push_count) {
  ring_ = std::move(ring);
  mean_ = std::move(mean);
  m2_ = std::move(m2);
  moving_avg_ = std::move(moving_avg);
  push_count_ = push_count;
}

}  // namespace disp
