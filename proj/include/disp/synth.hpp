#pragma once
#include <memory>
#include <random>
#include <vector>

#include "disp/adam.hpp"
#include "disp/flops.hpp"
#include "disp/nn.hpp"

namespace disp {

struct SceneConfig {
  int height = 32;
  int width = 32;
  int channels = 1;
  int num_classes = 3;  // disc, square, triangle
  double exposure_min = 1.0 / 100.0;
  double exposure_max = 1.0;  // log-uniform sampling
  double scene_gamma_min = 0.9;
  double scene_gamma_max = 1.1;
  double read_noise_min = 0.001;
  double read_noise_max = 0.01;
  double shot_noise_gain_min = 0.0005;
  double shot_noise_gain_max = 0.005;
  int quant_bits = 12;
  uint64_t seed = 1;

  void validate() const;
};

struct Sample {
  Tensor image;  // {C,H,W}, values in [0,1]
  int label = 0;
};

// Per-frame imaging conditions (sampled uniformly for datasets, drifting
// smoothly for sequences).
struct SceneConditions {
  double gamma = 1.0;
  double exposure = 1.0;
  double read_sigma = 0.0;
  double shot_gain = 0.0;
};

// Renders an anti-aliased shape on a textured background in linear light,
// applies exposure scale, gamma distortion, shot + read noise, and 12-bit
// sensor quantization. Pure function of (cfg, rng state).
Sample generate_scene(const SceneConfig& cfg, std::mt19937_64& rng);

// Same renderer with the imaging conditions pinned; only the content
// (shape, placement, background) comes from the rng.
Sample generate_scene_at(const SceneConfig& cfg, const SceneConditions& cond,
                         std::mt19937_64& rng);

std::vector<Sample> generate_dataset(const SceneConfig& cfg, uint64_t seed_base, int count);

// Ordered stream: fresh content every frame, imaging conditions performing a
// reflected random walk (step `drift` of each configured range per frame), so
// consecutive frames are shot under near-identical conditions.
std::vector<Sample> generate_sequence(const SceneConfig& cfg, uint64_t seed, int count,
                                      double drift = 0.05);

// Tiny classifier whose stage-1 feature feeds the controller.
// stage 1: two 3x3 stride-2 conv+ReLU blocks; head: conv+ReLU, pool, fc.
class SurrogateModel {
 public:
  struct Widths {
    int c1 = 8;
    int c2 = 16;
    int c3 = 16;
  };

  SurrogateModel(int in_channels, int num_classes, Widths widths = Widths{8, 16, 16});

  void init_params(ParamStore& store, std::mt19937_64& rng) const;

  int feature_channels() const { return widths_.c2; }

  struct Trace {
    Tensor feature;  // tapped stage-1 output {c2, H/4, W/4}
    Tensor logits;

    // Upstream gradients for logits and (optionally) the tapped feature.
    // Returns d_input; weight grads accumulate into `grads`.
    Tensor backward(const Tensor& d_logits, const Tensor* d_feature, GradMap& grads) const;

    struct Impl;
    std::shared_ptr<const Impl> impl;
  };

  Trace forward(const ParamStore& store, const Tensor& image) const;
  // Backbone stage 1 only (feature tap for frame 1).
  Trace forward_backbone(const ParamStore& store, const Tensor& image) const;

  FlopGraph flops(int h, int w) const;

 private:
  int in_channels_;
  int num_classes_;
  Widths widths_;
};

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);
int argmax_label(const Tensor& logits);

}  // namespace disp
