#include "disp/isp.hpp"

#include <cmath>
#include <memory>

namespace disp {

std::string isp_kind_name(IspKind k) {
  switch (k) {
    case IspKind::AG: return "AG";
    case IspKind::DN: return "DN";
    case IspKind::SN: return "SN";
    case IspKind::GM: return "GM";
    case IspKind::CS: return "CS";
  }
  throw ConfigError("bad IspKind");
}

IspKind isp_kind_from_name(const std::string& s) {
  if (s == "AG") return IspKind::AG;
  if (s == "DN") return IspKind::DN;
  if (s == "SN") return IspKind::SN;
  if (s == "GM") return IspKind::GM;
  if (s == "CS") return IspKind::CS;
  throw ConfigError("unknown ISP function '" + s + "'");
}

int isp_param_count(IspKind k) {
  switch (k) {
    case IspKind::AG: return 3;
    case IspKind::DN: return 3;
    case IspKind::SN: return 2;
    case IspKind::GM: return 3;
    case IspKind::CS: return 2;
  }
  throw ConfigError("bad IspKind");
}

void ParamSpec::validate() const {
  if (!(p_min < p_max) || !std::isfinite(p_min) || !std::isfinite(p_max))
    throw ConfigError("invalid bounds for parameter '" + name + "': [" + std::to_string(p_min) +
                      "," + std::to_string(p_max) + ")");
}

std::vector<ParamSpec> default_param_specs(IspKind k) {
  switch (k) {
    case IspKind::AG:
      return {{"p_w", 0.01, 0.99}, {"p_h", 0.01, 0.99}, {"p_x", 0.01, 0.99}};
    case IspKind::DN:
      return {{"p_a", 0.0, 1.0}, {"p_sigma_s", 0.1, 3.0}, {"p_sigma_i", 0.01, 1.0}};
    case IspKind::SN:
      return {{"p_a", 0.0, 1.0}, {"p_sigma", 0.1, 3.0}};
    case IspKind::GM:
      return {{"p_g1", 0.5, 5.0}, {"p_g2", 0.1, 2.0}, {"p_k", 0.01, 0.99}};
    case IspKind::CS:
      return {{"q_b", 0.5, 3.0}, {"q_c", -0.5, 0.5}};
  }
  throw ConfigError("bad IspKind");
}

void PipelineSpec::validate() const {
  if (stages.empty()) throw ConfigError("pipeline needs at least one stage");
  for (const StageSpec& st : stages) {
    const int n = isp_param_count(st.kind);
    if (static_cast<int>(st.specs.size()) != n || static_cast<int>(st.default_preact.size()) != n)
      throw ConfigError("stage " + isp_kind_name(st.kind) + " expects " + std::to_string(n) +
                        " parameters");
    for (const ParamSpec& ps : st.specs) ps.validate();
  }
}

int PipelineSpec::total_params() const {
  int n = 0;
  for (const StageSpec& st : stages) n += isp_param_count(st.kind);
  return n;
}

namespace {

void check_image(const Tensor& image, const char* op) {
  if (image.rank() != 3)
    throw ShapeError(std::string(op) + ": image must be {C,H,W}, got " + image.shape_str());
}

void check_params(const Tensor& params, int n, const char* op) {
  if (params.rank() != 1 || params.extent(0) != n)
    throw ShapeError(std::string(op) + ": expected " + std::to_string(n) + " parameters, got " +
                     params.shape_str());
}

inline int reflect(int i, int n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}

}  // namespace

GradRecord apply_ag(const Tensor& image, const Tensor& params) {
  check_image(image, "apply_ag");
  check_params(params, 3, "apply_ag");
  const double w = params[0], h = params[1], px = params[2];
  if (!(w > 0.0 && w < 1.0 && h > 0.0 && h < 1.0))
    throw DomainError("apply_ag: p_w and p_h must lie in (0,1), got p_w=" + std::to_string(w) +
                      " p_h=" + std::to_string(h));
  if (!(px >= 0.0 && px <= 1.0))
    throw DomainError("apply_ag: p_x must lie in [0,1], got " + std::to_string(px));

  const double t1 = px * (1.0 - w);
  const double t2 = t1 + w;
  const double s_out = (1.0 - h) / (1.0 - w);
  const double s_mid = h / w;

  Tensor out(image.shape);
  const int64_t n = image.numel();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    const double x = image[i];
    if (x < t1) {
      out[i] = s_out * x;
    } else if (x > t2) {
      out[i] = s_out * x + (h - w) / (1.0 - w);
    } else {
      out[i] = s_mid * (x - t1) + px * (1.0 - h);
    }
  }

  GradRecord rec;
  rec.output = std::move(out);
  rec.backward = [image, w, h, px, t1, t2, s_out, s_mid, n](const Tensor& u) {
    Tensor d_img(image.shape), d_p({3});
    double dw = 0, dh = 0, dpx = 0;
    const double omw = 1.0 - w, omw2 = omw * omw;
    for (int64_t i = 0; i < n; ++i) {
      const double x = image[i], g = u[i];
      if (x < t1) {
        d_img[i] = s_out * g;
        dh += g * (-x / omw);
        dw += g * ((1.0 - h) * x / omw2);
      } else if (x > t2) {
        d_img[i] = s_out * g;
        dh += g * ((1.0 - x) / omw);
        dw += g * ((1.0 - h) * (x - 1.0) / omw2);
      } else {
        d_img[i] = s_mid * g;
        dh += g * ((x - t1) / w - px);
        dw += g * (-h * (x - t1) / (w * w) + s_mid * px);
        dpx += g * (-s_mid * omw + (1.0 - h));
      }
    }
    d_p[0] = dw;
    d_p[1] = dh;
    d_p[2] = dpx;
    return std::vector<Tensor>{std::move(d_img), std::move(d_p)};
  };
  return rec;
}

namespace {

// Per-channel bilateral pass. Fills bf (same shape as one channel) and
// optionally the per-pixel weight sums.
void bilateral_channel(const double* X, int H, int W, double sig_s, double sig_i, double* bf) {
  const int r = kBilateralKernel / 2;
  const double inv2ss = 1.0 / (2.0 * sig_s * sig_s);
  const double inv2si = 1.0 / (2.0 * sig_i * sig_i);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const double xi = X[y * W + x];
      // residual form: exact on constant patches (every term is zero)
      double S = 0.0, R = 0.0;
      for (int dy = -r; dy <= r; ++dy) {
        const int jy = reflect(y + dy, H);
        for (int dx = -r; dx <= r; ++dx) {
          const int jx = reflect(x + dx, W);
          const double xj = X[jy * W + jx];
          const double di = xi - xj;
          const double wgt = std::exp(-(dy * dy + dx * dx) * inv2ss - di * di * inv2si);
          S += wgt;
          R += wgt * (xj - xi);
        }
      }
      bf[y * W + x] = xi + R / S;
    }
  }
}

}  // namespace

GradRecord apply_dn(const Tensor& image, const Tensor& params) {
  check_image(image, "apply_dn");
  check_params(params, 3, "apply_dn");
  const double a = params[0], sig_s = params[1], sig_i = params[2];
  if (!(a >= 0.0 && a <= 1.0))
    throw DomainError("apply_dn: p_a must lie in [0,1], got " + std::to_string(a));
  if (!(sig_s > kMinSigma) || !(sig_i > kMinSigma))
    throw DomainError("apply_dn: sigmas must be positive, got sigma_s=" + std::to_string(sig_s) +
                      " sigma_i=" + std::to_string(sig_i));

  const int C = image.extent(0), H = image.extent(1), W = image.extent(2);
  if (H < kBilateralKernel / 2 + 1 || W < kBilateralKernel / 2 + 1)
    throw ShapeError("apply_dn: image too small for 5x5 kernel");

  Tensor bf(image.shape);
  for (int c = 0; c < C; ++c)
    bilateral_channel(&image.data[static_cast<size_t>(c) * H * W], H, W, sig_s, sig_i,
                      &bf.data[static_cast<size_t>(c) * H * W]);

  Tensor out(image.shape);
  for (int64_t i = 0; i < image.numel(); ++i) out[i] = image[i] + a * (bf[i] - image[i]);

  GradRecord rec;
  rec.output = std::move(out);
  rec.backward = [image, bf, a, sig_s, sig_i, C, H, W](const Tensor& u) {
    Tensor d_img(image.shape), d_p({3});
    const int r = kBilateralKernel / 2;
    const double inv2ss = 1.0 / (2.0 * sig_s * sig_s);
    const double inv2si = 1.0 / (2.0 * sig_i * sig_i);
    const double inv_si2 = 1.0 / (sig_i * sig_i);
    double da = 0.0, dss = 0.0, dsi = 0.0;
    for (int c = 0; c < C; ++c) {
      const double* X = &image.data[static_cast<size_t>(c) * H * W];
      const double* B = &bf.data[static_cast<size_t>(c) * H * W];
      const double* U = &u.data[static_cast<size_t>(c) * H * W];
      double* D = &d_img.data[static_cast<size_t>(c) * H * W];
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          const int i = y * W + x;
          const double gu = U[i];
          D[i] += (1.0 - a) * gu;
          da += gu * (B[i] - X[i]);
          if (gu == 0.0) continue;
          const double g = a * gu;
          const double xi = X[i], bfi = B[i];
          // weight sum is recomputed; forward kept only the filtered value
          double S = 0.0;
          for (int dy = -r; dy <= r; ++dy) {
            const int jy = reflect(y + dy, H);
            for (int dx = -r; dx <= r; ++dx) {
              const int jx = reflect(x + dx, W);
              const double xj = X[jy * W + jx];
              const double di = xi - xj;
              S += std::exp(-(dy * dy + dx * dx) * inv2ss - di * di * inv2si);
            }
          }
          const double invS = 1.0 / S;
          for (int dy = -r; dy <= r; ++dy) {
            const int jy = reflect(y + dy, H);
            for (int dx = -r; dx <= r; ++dx) {
              const int jx = reflect(x + dx, W);
              const int j = jy * W + jx;
              const double xj = X[j];
              const double di = xi - xj;
              const double d2 = dy * dy + dx * dx;
              const double wgt = std::exp(-d2 * inv2ss - di * di * inv2si);
              const double resid = (xj - bfi) * invS;
              // value path
              D[j] += g * wgt * invS;
              // weight paths: dw/dxj = w*di/si^2, dw/dxi = -w*di/si^2
              const double dw_dxj = wgt * di * inv_si2;
              D[j] += g * resid * dw_dxj;
              D[i] -= g * resid * dw_dxj;
              // sigma paths
              dss += g * resid * wgt * d2 / (sig_s * sig_s * sig_s);
              dsi += g * resid * wgt * di * di / (sig_i * sig_i * sig_i);
            }
          }
        }
      }
    }
    d_p[0] = da;
    d_p[1] = dss;
    d_p[2] = dsi;
    return std::vector<Tensor>{std::move(d_img), std::move(d_p)};
  };
  return rec;
}

namespace {

struct GaussKernel {
  double k[kBilateralKernel * kBilateralKernel];
  double dk[kBilateralKernel * kBilateralKernel];  // d/d sigma
};

GaussKernel gauss_kernel(double sigma) {
  GaussKernel gk;
  const int r = kBilateralKernel / 2;
  const double inv2s = 1.0 / (2.0 * sigma * sigma);
  double sum = 0.0;
  double d2s[kBilateralKernel * kBilateralKernel];
  int t = 0;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx, ++t) {
      d2s[t] = dy * dy + dx * dx;
      gk.k[t] = std::exp(-d2s[t] * inv2s);
      sum += gk.k[t];
    }
  }
  double mu = 0.0;
  for (t = 0; t < kBilateralKernel * kBilateralKernel; ++t) {
    gk.k[t] /= sum;
    mu += gk.k[t] * d2s[t];
  }
  const double inv_s3 = 1.0 / (sigma * sigma * sigma);
  for (t = 0; t < kBilateralKernel * kBilateralKernel; ++t)
    gk.dk[t] = gk.k[t] * (d2s[t] - mu) * inv_s3;
  return gk;
}

}  // namespace

GradRecord apply_sn(const Tensor& image, const Tensor& params) {
  check_image(image, "apply_sn");
  check_params(params, 2, "apply_sn");
  const double a = params[0], sigma = params[1];
  if (!(a >= 0.0 && a <= 1.0))
    throw DomainError("apply_sn: p_a must lie in [0,1], got " + std::to_string(a));
  if (!(sigma > kMinSigma))
    throw DomainError("apply_sn: sigma must be positive, got " + std::to_string(sigma));

  const int C = image.extent(0), H = image.extent(1), W = image.extent(2);
  if (H < kBilateralKernel / 2 + 1 || W < kBilateralKernel / 2 + 1)
    throw ShapeError("apply_sn: image too small for 5x5 kernel");

  const GaussKernel gk = gauss_kernel(sigma);
  const int r = kBilateralKernel / 2;

  // residual X - GF(X), accumulated termwise so constant patches give exact 0
  Tensor res(image.shape);
  for (int c = 0; c < C; ++c) {
    const double* X = &image.data[static_cast<size_t>(c) * H * W];
    double* R = &res.data[static_cast<size_t>(c) * H * W];
#pragma omp parallel for schedule(static)
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const double xi = X[y * W + x];
        double s = 0.0;
        int t = 0;
        for (int dy = -r; dy <= r; ++dy) {
          const int jy = reflect(y + dy, H);
          for (int dx = -r; dx <= r; ++dx, ++t) {
            const int jx = reflect(x + dx, W);
            s += gk.k[t] * (xi - X[jy * W + jx]);
          }
        }
        R[y * W + x] = s;
      }
    }
  }

  Tensor out(image.shape);
  for (int64_t i = 0; i < image.numel(); ++i) out[i] = image[i] + a * res[i];

  GradRecord rec;
  rec.output = std::move(out);
  rec.backward = [image, res, gk, a, C, H, W](const Tensor& u) {
    Tensor d_img(image.shape), d_p({2});
    const int r = kBilateralKernel / 2;
    double da = 0.0, dsig = 0.0;
    for (int c = 0; c < C; ++c) {
      const double* X = &image.data[static_cast<size_t>(c) * H * W];
      const double* R = &res.data[static_cast<size_t>(c) * H * W];
      const double* U = &u.data[static_cast<size_t>(c) * H * W];
      double* D = &d_img.data[static_cast<size_t>(c) * H * W];
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          const int i = y * W + x;
          const double gu = U[i];
          D[i] += (1.0 + a) * gu;
          da += gu * R[i];
          if (gu == 0.0) continue;
          int t = 0;
          double dg_dsig = 0.0;
          for (int dy = -r; dy <= r; ++dy) {
            const int jy = reflect(y + dy, H);
            for (int dx = -r; dx <= r; ++dx, ++t) {
              const int jx = reflect(x + dx, W);
              D[jy * W + jx] -= a * gu * gk.k[t];
              dg_dsig += gk.dk[t] * X[jy * W + jx];
            }
          }
          dsig -= a * gu * dg_dsig;
        }
      }
    }
    d_p[0] = da;
    d_p[1] = dsig;
    return std::vector<Tensor>{std::move(d_img), std::move(d_p)};
  };
  return rec;
}

GradRecord apply_gm(const Tensor& image, const Tensor& params) {
  check_image(image, "apply_gm");
  check_params(params, 3, "apply_gm");
  const double g1 = params[0], g2 = params[1], pk = params[2];
  if (!(g1 > 0.0)) throw DomainError("apply_gm: p_g1 must be positive, got " + std::to_string(g1));
  if (!(pk > 0.0 && pk <= 1.0))
    throw DomainError("apply_gm: p_k must lie in (0,1], got " + std::to_string(pk));
  const double inv_g1 = 1.0 / g1;
  const double v = std::pow(pk, inv_g1);
  const double denom = 1.0 - (1.0 - g2) * v;
  if (std::fabs(denom) < 1e-6)
    throw NumericError("apply_gm: exponent denominator degenerate for p_g1=" + std::to_string(g1) +
                       " p_g2=" + std::to_string(g2) + " p_k=" + std::to_string(pk));

  constexpr double kClampLo = 1e-6;
  const int64_t n = image.numel();
  Tensor out(image.shape);
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    const double xc = std::min(1.0, std::max(kClampLo, image[i]));
    const double uq = std::pow(xc, inv_g1);
    const double e = inv_g1 * (1.0 - (1.0 - g2) * uq) / denom;
    out[i] = std::pow(xc, e);
  }

  GradRecord rec;
  rec.output = std::move(out);
  rec.backward = [image, g1, g2, pk, inv_g1, v, denom, n](const Tensor& up) {
    Tensor d_img(image.shape), d_p({3});
    double dg1 = 0, dg2 = 0, dpk = 0;
    constexpr double kClampLo = 1e-6;
    const double ln_pk = std::log(pk);
    for (int64_t i = 0; i < n; ++i) {
      const double g = up[i];
      if (g == 0.0) continue;
      const double x = image[i];
      const double xc = std::min(1.0, std::max(kClampLo, x));
      const double lnx = std::log(xc);
      const double uq = std::pow(xc, inv_g1);
      const double num = 1.0 - (1.0 - g2) * uq;
      const double e = inv_g1 * num / denom;
      const double y = std::pow(xc, e);

      // d/dX (only where the clamp is inactive)
      if (x > kClampLo && x <= 1.0) {
        const double de_dx = inv_g1 * (-(1.0 - g2) * inv_g1 * std::pow(xc, inv_g1 - 1.0)) / denom;
        d_img[i] = g * y * (e / xc + lnx * de_dx);
      }

      // exponent derivatives via a = 1/g1, u = xc^a, v = pk^a
      const double de_da =
          num / denom +
          inv_g1 * (-(1.0 - g2) * uq * lnx * denom + num * (1.0 - g2) * v * ln_pk) /
              (denom * denom);
      const double de_dg1 = de_da * (-inv_g1 * inv_g1);
      const double de_dg2 = inv_g1 * (uq * denom - num * v) / (denom * denom);
      const double de_dpk =
          inv_g1 * num * (1.0 - g2) * inv_g1 * std::pow(pk, inv_g1 - 1.0) / (denom * denom);

      const double ylnx = y * lnx;
      dg1 += g * ylnx * de_dg1;
      dg2 += g * ylnx * de_dg2;
      dpk += g * ylnx * de_dpk;
    }
    d_p[0] = dg1;
    d_p[1] = dg2;
    d_p[2] = dpk;
    return std::vector<Tensor>{std::move(d_img), std::move(d_p)};
  };
  return rec;
}

GradRecord apply_cs(const Tensor& image, const Tensor& params) {
  check_image(image, "apply_cs");
  check_params(params, 2, "apply_cs");
  const double qb = params[0], qc = params[1];
  if (!std::isfinite(qb) || !std::isfinite(qc)) throw DomainError("apply_cs: non-finite parameters");

  Tensor out(image.shape);
  const int64_t n = image.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = qb * image[i] + qc;

  GradRecord rec;
  rec.output = std::move(out);
  rec.backward = [image, qb, n](const Tensor& u) {
    Tensor d_img(image.shape), d_p({2});
    double db = 0, dc = 0;
    for (int64_t i = 0; i < n; ++i) {
      d_img[i] = qb * u[i];
      db += u[i] * image[i];
      dc += u[i];
    }
    d_p[0] = db;
    d_p[1] = dc;
    return std::vector<Tensor>{std::move(d_img), std::move(d_p)};
  };
  return rec;
}

GradRecord apply_isp_stage(IspKind kind, const Tensor& image, const Tensor& params) {
  switch (kind) {
    case IspKind::AG: return apply_ag(image, params);
    case IspKind::DN: return apply_dn(image, params);
    case IspKind::SN: return apply_sn(image, params);
    case IspKind::GM: return apply_gm(image, params);
    case IspKind::CS: return apply_cs(image, params);
  }
  throw ConfigError("bad IspKind");
}

GradRecord apply_pipeline(const Tensor& image, const PipelineSpec& spec,
                          const std::vector<ParamSet>& params) {
  spec.validate();
  if (params.size() != spec.stages.size())
    throw ConfigError("apply_pipeline: " + std::to_string(params.size()) + " parameter sets for " +
                      std::to_string(spec.stages.size()) + " stages");

  auto stages = std::make_shared<std::vector<GradRecord>>();
  stages->reserve(spec.stages.size());
  const Tensor* cur = &image;
  for (size_t l = 0; l < spec.stages.size(); ++l) {
    const StageSpec& st = spec.stages[l];
    if (params[l].kind != st.kind)
      throw ConfigError("apply_pipeline: parameter set " + std::to_string(l) + " is for " +
                        isp_kind_name(params[l].kind) + ", stage is " + isp_kind_name(st.kind));
    Tensor pt({isp_param_count(st.kind)});
    pt.data = params[l].values;
    stages->push_back(apply_isp_stage(st.kind, *cur, pt));
    cur = &stages->back().output;
  }

  GradRecord rec;
  rec.output = stages->back().output;
  rec.backward = [stages](const Tensor& u) {
    std::vector<Tensor> result(stages->size() + 1);
    Tensor g = u;
    for (size_t l = stages->size(); l-- > 0;) {
      std::vector<Tensor> gs = (*stages)[l].backward(g);
      result[l + 1] = std::move(gs[1]);
      g = std::move(gs[0]);
    }
    result[0] = std::move(g);
    return result;
  };
  return rec;
}

}  // namespace disp
