#pragma once
#include <string>
#include <vector>

#include "disp/tensor.hpp"

namespace disp {

enum class IspKind { AG, DN, SN, GM, CS };

std::string isp_kind_name(IspKind k);
IspKind isp_kind_from_name(const std::string& s);
int isp_param_count(IspKind k);  // AG:3 DN:3 SN:2 GM:3 CS:2

struct ParamSpec {
  std::string name;
  double p_min = 0.0;
  double p_max = 1.0;

  void validate() const;
  bool contains(double v) const { return v > p_min && v < p_max; }
};

// Default search bounds, overridable via config.
std::vector<ParamSpec> default_param_specs(IspKind k);

struct ParamSet {
  IspKind kind = IspKind::CS;
  std::vector<double> values;
};

struct StageSpec {
  IspKind kind = IspKind::CS;
  std::vector<ParamSpec> specs;
  // learnable defaults, stored in pre-activation space (p = act_range(p_hat))
  std::vector<double> default_preact;
};

struct PipelineSpec {
  std::vector<StageSpec> stages;

  void validate() const;
  int total_params() const;
};

constexpr int kBilateralKernel = 5;

// Each op takes an image {C,H,W} and a parameter vector; backward order is
// {d_image, d_params}.

// Piecewise-linear gain. params = {p_w, p_h, p_x}; p_w, p_h in (0,1),
// p_x in [0,1]. Subgradient at the two breakpoints uses the central slope.
GradRecord apply_ag(const Tensor& image, const Tensor& params);

// Bilateral denoiser blend. params = {p_a, p_sigma_s, p_sigma_i};
// p_a in [0,1], sigmas > 0. 5x5 kernel, per-pixel weight normalization,
// intensity weights from the input image.
GradRecord apply_dn(const Tensor& image, const Tensor& params);

// Unsharp-mask sharpener: X + p_a * (X - GF(sigma; X)), 5x5 Gaussian
// renormalized to sum 1. params = {p_a, p_sigma}.
GradRecord apply_sn(const Tensor& image, const Tensor& params);

// Parameterized gamma tone map. params = {p_g1, p_g2, p_k}. Input clamped to
// [1e-6, 1] before exponentiation; d/dX is zero where the clamp is active.
GradRecord apply_gm(const Tensor& image, const Tensor& params);

// Contrast stretcher q_b*X + q_c, unclipped. params = {q_b, q_c}.
GradRecord apply_cs(const Tensor& image, const Tensor& params);

GradRecord apply_isp_stage(IspKind kind, const Tensor& image, const Tensor& params);

// Left-to-right composition. backward order: {d_image, d_params_1, ...,
// d_params_L}.
GradRecord apply_pipeline(const Tensor& image, const PipelineSpec& spec,
                          const std::vector<ParamSet>& params);

// kernels guard: sigma values this small would underflow every off-center tap
constexpr double kMinSigma = 1e-3;

}  // namespace disp
