#pragma once
#include <memory>

#include "disp/adam.hpp"
#include "disp/flops.hpp"
#include "disp/isp.hpp"
#include "disp/nn.hpp"

namespace disp {

// Bounded output activation: (p_max - p_min) * sigmoid(x) + p_min.
double act_range(double x, const ParamSpec& spec);
double act_range_deriv(double x, const ParamSpec& spec);

enum class ControlMode { Plain, ResidualStatic, ResidualLearnable };

std::string control_mode_name(ControlMode m);
ControlMode control_mode_from_name(const std::string& s);

struct ControllerConfig {
  ControlMode mode = ControlMode::ResidualLearnable;
  bool latent_update = true;
  int latent_width = 256;
  int sfb_channels = 16;   // output channels of the SFB convolution
  int sfb_fc_width = 1024;
  int update_hidden = 64;  // hidden width of the latent-update block f_a
};

// Feedback controller: SFB encoder over a recognizer feature, per-stage
// residual decode heads, and the multiplicative latent-update chain.
class Controller {
 public:
  Controller(ControllerConfig cfg, PipelineSpec pipeline, int feature_channels);

  const ControllerConfig& config() const { return cfg_; }
  const PipelineSpec& pipeline() const { return pipeline_; }

  // Registers ctrl/* weights and isp/stage*/p_hat tensors. Decode layers are
  // zero-initialized so training starts at the static operating point.
  void init_params(ParamStore& store, std::mt19937_64& rng) const;

  struct Trace {
    std::vector<ParamSet> params;  // decoded post-activation values, one per stage

    // d_params: upstream gradient per stage (post-activation space). Returns
    // the gradient w.r.t. the input feature; weight and p_hat gradients are
    // accumulated into `grads`.
    Tensor backward(const std::vector<Tensor>& d_params, GradMap& grads) const;

    struct Impl;
    std::shared_ptr<const Impl> impl;
  };

  Trace forward(const ParamStore& store, const Tensor& feature) const;

  // Static params from the stored p_hat values: act_range(p_hat) per stage.
  std::vector<ParamSet> static_params(const ParamStore& store) const;

  // Cost of one decode + latent-update head (the per-ISP-function overhead).
  FlopGraph head_flops() const;
  FlopGraph sfb_flops(int feature_h, int feature_w) const;

  static std::string p_hat_name(size_t stage) { return "isp/stage" + std::to_string(stage) + "/p_hat"; }

 private:
  ControllerConfig cfg_;
  PipelineSpec pipeline_;
  int feature_channels_;
};

}  // namespace disp
