#pragma once
#include <optional>
#include <ostream>

#include "disp/controller.hpp"
#include "disp/init_buffer.hpp"
#include "disp/synth.hpp"

namespace disp {

struct TrainConfig {
  int epochs_phase1 = 4;
  int epochs_phase2 = 4;
  double lr_max = 1e-3;
  double lr_min = 1e-6;
  int warmup_steps = 1000;
  double controller_lr_mult = 0.1;
  double p_hat_lr_mult = 1.0;
  int batch_size = 16;
  uint64_t seed = 1;
  InitStrategy init_strategy = InitStrategy::Buffer;
  // buffer/gaussian sampling replays controller predictions; for the first N
  // two-frame steps those come from an untrained controller, so optionally
  // fall back to uniform draws until the loop has something worth replaying
  int init_burnin_steps = 0;
  int buffer_capacity = 500;
  double ma_decay = 0.99;
  int train_images = 2000;
  int test_images = 500;
  // sequential inference blends the carried parameters toward each new
  // prediction; without damping a controller trained on two-frame pairs tends
  // to overcorrect and the carried-parameter iteration oscillates
  double seq_blend = 0.5;

  void validate() const;
};

struct RunConfig {
  PipelineSpec pipeline;
  ControllerConfig controller;
  TrainConfig trainer;
  SceneConfig synth;
  SurrogateModel::Widths net;
};

RunConfig default_run_config();

enum class EvalMode { Twice, Sequential };

struct EvalResult {
  double accuracy = 0.0;
  std::vector<std::vector<double>> param_log;  // one flattened vector per image
};

class Trainer {
 public:
  explicit Trainer(RunConfig cfg);

  // Two-frame end-to-end training, then a second phase with ISP and
  // controller frozen. Writes one line-delimited JSON record per epoch.
  void fit(std::ostream* metrics = nullptr);

  // Differentiable static tuning: p_hat trained jointly with the surrogate,
  // controller disabled.
  void tune_static(std::ostream* metrics = nullptr);

  double train_step_two_frame(const std::vector<const Sample*>& batch);
  double train_step_static(const std::vector<const Sample*>& batch);

  EvalResult evaluate(const std::vector<Sample>& data, EvalMode mode) const;
  EvalResult evaluate_static(const std::vector<Sample>& data) const;

  const RunConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  InitBuffer& buffer() { return buffer_; }
  const InitBuffer& buffer() const { return buffer_; }
  const Controller& controller() const { return *controller_; }
  const SurrogateModel& surrogate() const { return surrogate_; }
  OptimizerState& optimizer() { return opt_; }
  const std::vector<Sample>& train_set() const { return train_; }
  const std::vector<Sample>& test_set() const { return test_; }

  std::vector<double> static_param_values() const;  // act_range(p_hat), flattened
  std::vector<ParamSet> unflatten(const std::vector<double>& flat) const;
  static std::vector<double> flatten(const std::vector<ParamSet>& sets);

 private:
  friend struct CheckpointCodec;

  double run_batch(const std::vector<const Sample*>& batch, bool dynamic, GradMap& grads);
  void run_phase(int phase, int epochs, bool dynamic,
                 const std::function<bool(const std::string&)>& trainable, std::ostream* metrics);

  RunConfig cfg_;
  ParamStore store_;
  OptimizerState opt_;
  std::unique_ptr<Controller> controller_;
  SurrogateModel surrogate_;
  InitBuffer buffer_;
  std::mt19937_64 rng_;
  long dyn_steps_ = 0;  // lifetime two-frame step count, drives init burn-in
  std::vector<Sample> train_, test_;
  std::function<bool(const std::string&)> trainable_;
};

struct GridSearchResult {
  std::vector<double> gammas;
  std::vector<double> scores;
  double best_gamma = 1.0;
  double best_score = 0.0;
};

// Trains the surrogate per grid point on simple-gamma-processed images
// (y = x^(1/gamma)) and scores test accuracy.
GridSearchResult grid_search_gamma(const RunConfig& cfg, const std::vector<double>& grid,
                                   std::ostream* metrics = nullptr);

}  // namespace disp
