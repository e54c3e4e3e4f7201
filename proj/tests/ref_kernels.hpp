#pragma once
// Serial brute-force reference kernels. Deliberately written straight from the
// definitions (no shared normalization tricks, no threading) so the parallel
// library kernels can be validated against them; the bench target times both.
#include <cmath>

#include "disp/isp.hpp"
#include "disp/nn.hpp"

namespace disp::ref {

inline int reflect101(int i, int n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}

inline Tensor bilateral(const Tensor& image, double sig_s, double sig_i) {
  const int C = image.extent(0), H = image.extent(1), W = image.extent(2);
  const int r = kBilateralKernel / 2;
  Tensor out(image.shape);
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double num = 0.0, den = 0.0;
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx) {
            const double xj = image.at3(c, reflect101(y + dy, H), reflect101(x + dx, W));
            const double di = image.at3(c, y, x) - xj;
            const double w = std::exp(-(dy * dy + dx * dx) / (2.0 * sig_s * sig_s) -
                                      di * di / (2.0 * sig_i * sig_i));
            num += w * xj;
            den += w;
          }
        out.at3(c, y, x) = num / den;
      }
  return out;
}

inline Tensor dn(const Tensor& image, double a, double sig_s, double sig_i) {
  Tensor bf = bilateral(image, sig_s, sig_i);
  Tensor out(image.shape);
  for (int64_t i = 0; i < image.numel(); ++i) out[i] = (1.0 - a) * image[i] + a * bf[i];
  return out;
}

inline Tensor gauss_blur(const Tensor& image, double sigma) {
  const int C = image.extent(0), H = image.extent(1), W = image.extent(2);
  const int r = kBilateralKernel / 2;
  double k[kBilateralKernel][kBilateralKernel];
  double sum = 0.0;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) {
      k[dy + r][dx + r] = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
      sum += k[dy + r][dx + r];
    }
  for (int dy = 0; dy < kBilateralKernel; ++dy)
    for (int dx = 0; dx < kBilateralKernel; ++dx) k[dy][dx] /= sum;

  Tensor out(image.shape);
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double s = 0.0;
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx)
            s += k[dy + r][dx + r] * image.at3(c, reflect101(y + dy, H), reflect101(x + dx, W));
        out.at3(c, y, x) = s;
      }
  return out;
}

inline Tensor sn(const Tensor& image, double a, double sigma) {
  Tensor gf = gauss_blur(image, sigma);
  Tensor out(image.shape);
  for (int64_t i = 0; i < image.numel(); ++i) out[i] = image[i] + a * (image[i] - gf[i]);
  return out;
}

inline Tensor conv2d(const Tensor& input, const Tensor& kernels, int stride, Pad padding) {
  const int C = input.extent(0), H = input.extent(1), W = input.extent(2);
  const int F = kernels.extent(0), k = kernels.extent(2), r = k / 2;
  const int Ho = (H - 1) / stride + 1, Wo = (W - 1) / stride + 1;
  Tensor out({F, Ho, Wo});
  for (int f = 0; f < F; ++f)
    for (int oy = 0; oy < Ho; ++oy)
      for (int ox = 0; ox < Wo; ++ox) {
        double s = 0.0;
        for (int c = 0; c < C; ++c)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int iy = oy * stride + ky - r, ix = ox * stride + kx - r;
              double v;
              if (padding == Pad::Reflect) {
                v = input.at3(c, reflect101(iy, H), reflect101(ix, W));
              } else {
                v = (iy < 0 || iy >= H || ix < 0 || ix >= W) ? 0.0 : input.at3(c, iy, ix);
              }
              s += v * kernels.data[((static_cast<size_t>(f) * C + c) * k + ky) * k + kx];
            }
        out.at3(f, oy, ox) = s;
      }
  return out;
}

}  // namespace disp::ref
