#include "disp/nn.hpp"

#include <cmath>

namespace disp {

double sigmoid_scalar(double x) {
  if (x >= 0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

GradRecord fc(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  if (input.rank() != 1 || weight.rank() != 2 || bias.rank() != 1)
    throw ShapeError("fc: expected vector input " + input.shape_str() + ", matrix weight " +
                     weight.shape_str() + ", vector bias " + bias.shape_str());
  const int n_out = weight.extent(0);
  const int n_in = weight.extent(1);
  if (input.extent(0) != n_in || bias.extent(0) != n_out)
    throw ShapeError("fc: dimension mismatch input " + input.shape_str() + " weight " +
                     weight.shape_str() + " bias " + bias.shape_str());

  Tensor out({n_out});
  for (int o = 0; o < n_out; ++o) {
    double s = bias[o];
    for (int i = 0; i < n_in; ++i) s += weight.at2(o, i) * input[i];
    out[o] = s;
  }

  GradRecord rec;
  rec.output = std::move(out);
  rec.backward = [input, weight, n_out, n_in](const Tensor& u) {
    Tensor d_in({n_in}), d_w({n_out, n_in}), d_b({n_out});
    for (int o = 0; o < n_out; ++o) {
      d_b[o] = u[o];
      for (int i = 0; i < n_in; ++i) {
        d_in[i] += weight.at2(o, i) * u[o];
        d_w.at2(o, i) = u[o] * input[i];
      }
    }
    return std::vector<Tensor>{std::move(d_in), std::move(d_w), std::move(d_b)};
  };
  return rec;
}

namespace {

// reflect-101 border; returns -1 for out-of-range under zero padding
inline int map_idx(int i, int n, Pad pad) {
  if (i >= 0 && i < n) return i;
  if (pad == Pad::Zero) return -1;
  if (i < 0) return -i;
  return 2 * n - 2 - i;
}

}  // namespace

GradRecord conv2d(const Tensor& input, const Tensor& kernels, int stride, Pad padding) {
  if (input.rank() != 3 || kernels.rank() != 4)
    throw ShapeError("conv2d: expected {C,H,W} input and {F,C,k,k} kernels, got " +
                     input.shape_str() + " and " + kernels.shape_str());
  const int C = input.extent(0), H = input.extent(1), W = input.extent(2);
  const int F = kernels.extent(0), k = kernels.extent(2);
  if (kernels.extent(1) != C || kernels.extent(3) != k)
    throw ShapeError("conv2d: kernel shape " + kernels.shape_str() + " does not match input " +
                     input.shape_str());
  if (k % 2 == 0) throw ConfigError("conv2d: kernel size must be odd, got " + std::to_string(k));
  if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
  if (padding == Pad::Reflect && (H < k || W < k))
    throw ShapeError("conv2d: reflect padding needs H,W >= k");

  const int p = k / 2;
  const int Ho = (H - 1) / stride + 1;
  const int Wo = (W - 1) / stride + 1;

  Tensor out({F, Ho, Wo});
  auto kat = [&](int f, int c, int dy, int dx) {
    return kernels.data[((static_cast<size_t>(f) * C + c) * k + dy) * k + dx];
  };
#pragma omp parallel for collapse(2) schedule(static)
  for (int f = 0; f < F; ++f) {
    for (int oy = 0; oy < Ho; ++oy) {
      for (int ox = 0; ox < Wo; ++ox) {
        double s = 0.0;
        for (int c = 0; c < C; ++c) {
          for (int dy = 0; dy < k; ++dy) {
            const int iy = map_idx(oy * stride - p + dy, H, padding);
            if (iy < 0) continue;
            for (int dx = 0; dx < k; ++dx) {
              const int ix = map_idx(ox * stride - p + dx, W, padding);
              if (ix < 0) continue;
              s += kat(f, c, dy, dx) * input.at3(c, iy, ix);
            }
          }
        }
        out.at3(f, oy, ox) = s;
      }
    }
  }

  GradRecord rec;
  rec.output = std::move(out);
  rec.backward = [input, kernels, stride, padding, C, H, W, F, k, p, Ho, Wo](const Tensor& u) {
    Tensor d_in({C, H, W}), d_k({F, C, k, k});
    auto kat = [&](int f, int c, int dy, int dx) {
      return kernels.data[((static_cast<size_t>(f) * C + c) * k + dy) * k + dx];
    };
    auto dkat = [&](int f, int c, int dy, int dx) -> double& {
      return d_k.data[((static_cast<size_t>(f) * C + c) * k + dy) * k + dx];
    };
    for (int f = 0; f < F; ++f) {
      for (int oy = 0; oy < Ho; ++oy) {
        for (int ox = 0; ox < Wo; ++ox) {
          const double g = u.at3(f, oy, ox);
          if (g == 0.0) continue;
          for (int c = 0; c < C; ++c) {
            for (int dy = 0; dy < k; ++dy) {
              const int iy = map_idx(oy * stride - p + dy, H, padding);
              if (iy < 0) continue;
              for (int dx = 0; dx < k; ++dx) {
                const int ix = map_idx(ox * stride - p + dx, W, padding);
                if (ix < 0) continue;
                d_in.at3(c, iy, ix) += kat(f, c, dy, dx) * g;
                dkat(f, c, dy, dx) += input.at3(c, iy, ix) * g;
              }
            }
          }
        }
      }
    }
    return std::vector<Tensor>{std::move(d_in), std::move(d_k)};
  };
  return rec;
}

GradRecord add_channel_bias(const Tensor& input, const Tensor& bias) {
  if (input.rank() != 3 || bias.rank() != 1 || bias.extent(0) != input.extent(0))
    throw ShapeError("add_channel_bias: input " + input.shape_str() + " bias " + bias.shape_str());
  const int C = input.extent(0);
  const int HW = input.extent(1) * input.extent(2);
  Tensor out = input;
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < HW; ++i) out.data[static_cast<size_t>(c) * HW + i] += bias[c];

  GradRecord rec;
  rec.output = std::move(out);
  rec.backward = [C, HW, shape = input.shape](const Tensor& u) {
    Tensor d_b({C});
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < HW; ++i) d_b[c] += u.data[static_cast<size_t>(c) * HW + i];
    return std::vector<Tensor>{u, std::move(d_b)};
  };
  return rec;
}

GradRecord relu(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.data) v = v > 0 ? v : 0.0;
  GradRecord rec;
  rec.output = std::move(out);
  rec.backward = [input](const Tensor& u) {
    Tensor d = u;
    for (size_t i = 0; i < d.data.size(); ++i)
      if (input.data[i] <= 0) d.data[i] = 0.0;
    return std::vector<Tensor>{std::move(d)};
  };
  return rec;
}

GradRecord sigmoid(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.data) v = sigmoid_scalar(v);
  GradRecord rec;
  Tensor saved = rec.output = std::move(out);
  rec.backward = [saved](const Tensor& u) {
    Tensor d = u;
    for (size_t i = 0; i < d.data.size(); ++i) {
      const double s = saved.data[i];
      d.data[i] *= s * (1.0 - s);
    }
    return std::vector<Tensor>{std::move(d)};
  };
  return rec;
}

GradRecord global_avg_pool(const Tensor& input) {
  if (input.rank() != 3) throw ShapeError("global_avg_pool: expected {C,H,W}, got " + input.shape_str());
  const int C = input.extent(0);
  const int HW = input.extent(1) * input.extent(2);
  Tensor out({C});
  for (int c = 0; c < C; ++c) {
    double s = 0.0;
    for (int i = 0; i < HW; ++i) s += input.data[static_cast<size_t>(c) * HW + i];
    out[c] = s / HW;
  }
  GradRecord rec;
  rec.output = std::move(out);
  rec.backward = [C, HW, shape = input.shape](const Tensor& u) {
    Tensor d(shape);
    for (int c = 0; c < C; ++c) {
      const double g = u[c] / HW;
      for (int i = 0; i < HW; ++i) d.data[static_cast<size_t>(c) * HW + i] = g;
    }
    return std::vector<Tensor>{std::move(d)};
  };
  return rec;
}

GradRecord softmax_cross_entropy(const Tensor& logits, int label) {
  if (logits.rank() != 1) throw ShapeError("softmax_cross_entropy: logits must be a vector");
  const int k = logits.extent(0);
  if (label < 0 || label >= k)
    throw IndexError("softmax_cross_entropy: label " + std::to_string(label) + " out of range [0," +
                     std::to_string(k) + ")");
  double m = logits[0];
  for (int i = 1; i < k; ++i) m = std::max(m, logits[i]);
  double z = 0.0;
  for (int i = 0; i < k; ++i) z += std::exp(logits[i] - m);
  const double logz = std::log(z) + m;
  const double loss = logz - logits[label];

  Tensor probs({k});
  for (int i = 0; i < k; ++i) probs[i] = std::exp(logits[i] - logz);

  GradRecord rec;
  rec.output = Tensor::scalar(loss);
  rec.backward = [probs, label, k](const Tensor& u) {
    Tensor d = probs;
    d[label] -= 1.0;
    for (double& v : d.data) v *= u[0];
    return std::vector<Tensor>{std::move(d)};
  };
  return rec;
}

}  // namespace disp
