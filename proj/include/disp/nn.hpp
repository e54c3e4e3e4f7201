#pragma once
#include "disp/tensor.hpp"

namespace disp {

enum class Pad { Reflect, Zero };

// output = weight * input + bias. input {n_in}, weight {n_out,n_in}, bias {n_out}.
// backward order: {d_input, d_weight, d_bias}
GradRecord fc(const Tensor& input, const Tensor& weight, const Tensor& bias);

// Cross-correlation, input {C,H,W}, kernels {F,C,k,k}, odd k, "same"-style
// padding (k/2 per side) then strided. backward order: {d_input, d_kernels}.
GradRecord conv2d(const Tensor& input, const Tensor& kernels, int stride, Pad padding);

// Per-channel bias on a {C,H,W} tensor. backward order: {d_input, d_bias}
GradRecord add_channel_bias(const Tensor& input, const Tensor& bias);

GradRecord relu(const Tensor& input);
GradRecord sigmoid(const Tensor& input);

// {C,H,W} -> {C}
GradRecord global_avg_pool(const Tensor& input);

// logits {k}, label in [0,k). Output is a scalar tensor {1}.
// backward order: {d_logits}
GradRecord softmax_cross_entropy(const Tensor& logits, int label);

double sigmoid_scalar(double x);

}  // namespace disp
