#pragma once
#include <deque>
#include <random>
#include <vector>

#include "disp/isp.hpp"

namespace disp {

enum class InitStrategy { None, Uniform, Gaussian, Buffer };

std::string init_strategy_name(InitStrategy s);
InitStrategy init_strategy_from_name(const std::string& s);

// Ring buffer of the M most recent predicted parameter vectors (all stages
// concatenated, post-activation), with running statistics and a moving
// average used as the inference-time initial parameter set.
class InitBuffer {
 public:
  explicit InitBuffer(std::vector<ParamSpec> specs, int capacity = 500, double ma_decay = 0.99);

  void push(const std::vector<double>& params);
  std::vector<double> sample(InitStrategy strategy, const std::vector<double>& p_hat_values,
                             std::mt19937_64& rng) const;
  // Moving average of predicted parameters, clamped into bounds. Falls back
  // to the provided static values when nothing was pushed yet.
  std::vector<double> inference_initial(const std::vector<double>& p_hat_values) const;

  int size() const { return static_cast<int>(ring_.size()); }
  int capacity() const { return capacity_; }
  const std::deque<std::vector<double>>& contents() const { return ring_; }
  std::vector<double> running_mean() const;
  std::vector<double> running_variance() const;
  const std::vector<double>& moving_average() const { return moving_avg_; }
  int64_t push_count() const { return push_count_; }
  double ma_decay() const { return ma_decay_; }

  // checkpoint support
  void restore(std::deque<std::vector<double>> ring, std::vector<double> mean,
               std::vector<double> m2, std::vector<double> moving_avg, int64_t push_count);
  const std::vector<double>& raw_mean() const { return mean_; }
  const std::vector<double>& raw_m2() const { return m2_; }

 private:
  double clamp_into(double v, const ParamSpec& spec) const;

  std::vector<ParamSpec> specs_;
  int capacity_;
  double ma_decay_;
  std::deque<std::vector<double>> ring_;
  std::vector<double> mean_, m2_;  // Welford accumulators
  std::vector<double> moving_avg_;
  int64_t push_count_ = 0;
};

}  // namespace disp
