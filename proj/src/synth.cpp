#include "disp/synth.hpp"

#include <cmath>

namespace disp {

void SceneConfig::validate() const {
  if (height < 8 || width < 8) throw ConfigError("scene size too small");
  if (channels < 1) throw ConfigError("channels must be >= 1");
  if (num_classes < 2 || num_classes > 3) throw ConfigError("num_classes must be 2 or 3");
  if (!(exposure_min > 0 && exposure_min <= exposure_max))
    throw ConfigError("invalid exposure range");
  if (quant_bits < 1 || quant_bits > 16) throw ConfigError("quant_bits must be in [1,16]");
}

namespace {

double shape_coverage(int label, double px, double py, double cx, double cy, double r) {
  // 3x3 subsamples per pixel
  int hit = 0;
  for (int sy = 0; sy < 3; ++sy) {
    for (int sx = 0; sx < 3; ++sx) {
      const double x = px + (sx + 0.5) / 3.0;
      const double y = py + (sy + 0.5) / 3.0;
      const double dx = x - cx, dy = y - cy;
      bool inside = false;
      switch (label) {
        case 0:  // disc
          inside = dx * dx + dy * dy <= r * r;
          break;
        case 1: {  // axis-aligned square
          const double s = r * 0.85;
          inside = std::fabs(dx) <= s && std::fabs(dy) <= s;
          break;
        }
        case 2: {  // upward triangle
          const double x0 = cx, y0 = cy - r;
          const double x1 = cx - 0.87 * r, y1 = cy + 0.5 * r;
          const double x2 = cx + 0.87 * r, y2 = cy + 0.5 * r;
          auto side = [&](double ax, double ay, double bx, double by) {
            return (bx - ax) * (y - ay) - (by - ay) * (x - ax);
          };
          const double d0 = side(x0, y0, x1, y1);
          const double d1 = side(x1, y1, x2, y2);
          const double d2 = side(x2, y2, x0, y0);
          inside = (d0 >= 0 && d1 >= 0 && d2 >= 0) || (d0 <= 0 && d1 <= 0 && d2 <= 0);
          break;
        }
      }
      if (inside) ++hit;
    }
  }
  return hit / 9.0;
}

}  // namespace

namespace {

struct SceneContent {
  int label = 0;
  std::vector<double> grid;  // coarse background noise, bilinear upsampled
  double fg = 0.0;
  double cx = 0.0, cy = 0.0, r = 0.0;
};

constexpr int kBgGrid = 5;

SceneContent draw_content(const SceneConfig& cfg, std::mt19937_64& rng) {
  const int H = cfg.height, W = cfg.width;
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  SceneContent c;
  c.label = static_cast<int>(u01(rng) * cfg.num_classes);
  if (c.label >= cfg.num_classes) c.label = cfg.num_classes - 1;

  c.grid.resize(kBgGrid * kBgGrid);
  const double base = 0.15 + 0.2 * u01(rng);
  const double amp = 0.02 + 0.05 * u01(rng);
  for (double& v : c.grid) v = base + amp * (2.0 * u01(rng) - 1.0);

  // shape placement; resample until it fits the canvas
  c.fg = 0.55 + 0.4 * u01(rng);
  for (int tries = 0; tries < 64; ++tries) {
    c.r = (0.18 + 0.17 * u01(rng)) * std::min(H, W);
    c.cx = c.r + u01(rng) * (W - 2 * c.r);
    c.cy = c.r + u01(rng) * (H - 2 * c.r);
    if (c.cx - c.r >= 0 && c.cx + c.r <= W && c.cy - c.r >= 0 && c.cy + c.r <= H) break;
    c.r = 0.18 * std::min(H, W);
    c.cx = W / 2.0;
    c.cy = H / 2.0;
  }
  return c;
}

SceneConditions draw_conditions(const SceneConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  SceneConditions cond;
  cond.gamma = cfg.scene_gamma_min + (cfg.scene_gamma_max - cfg.scene_gamma_min) * u01(rng);
  const double log_lo = std::log(cfg.exposure_min), log_hi = std::log(cfg.exposure_max);
  cond.exposure = std::exp(log_lo + (log_hi - log_lo) * u01(rng));
  cond.read_sigma = cfg.read_noise_min + (cfg.read_noise_max - cfg.read_noise_min) * u01(rng);
  cond.shot_gain =
      cfg.shot_noise_gain_min + (cfg.shot_noise_gain_max - cfg.shot_noise_gain_min) * u01(rng);
  return cond;
}

Sample render_scene(const SceneConfig& cfg, const SceneContent& c, const SceneConditions& cond,
                    std::mt19937_64& rng) {
  const int H = cfg.height, W = cfg.width, G = kBgGrid;
  std::normal_distribution<double> n01(0.0, 1.0);
  const double qmax = (1 << cfg.quant_bits) - 1;

  Sample s;
  s.label = c.label;
  s.image = Tensor({cfg.channels, H, W});
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      // bilinear background lookup
      const double gx = static_cast<double>(x) / (W - 1) * (G - 1);
      const double gy = static_cast<double>(y) / (H - 1) * (G - 1);
      const int ix = std::min(G - 2, static_cast<int>(gx));
      const int iy = std::min(G - 2, static_cast<int>(gy));
      const double fx = gx - ix, fy = gy - iy;
      const double bg =
          (1 - fy) * ((1 - fx) * c.grid[iy * G + ix] + fx * c.grid[iy * G + ix + 1]) +
          fy * ((1 - fx) * c.grid[(iy + 1) * G + ix] + fx * c.grid[(iy + 1) * G + ix + 1]);

      const double cov = shape_coverage(c.label, x, y, c.cx, c.cy, c.r);
      double v = bg + cov * (c.fg - bg);
      v = std::pow(std::max(0.0, v), cond.gamma);
      v *= cond.exposure;
      const double sigma =
          std::sqrt(cond.shot_gain * std::max(0.0, v) + cond.read_sigma * cond.read_sigma);
      v += sigma * n01(rng);
      v = std::min(1.0, std::max(0.0, v));
      v = std::round(v * qmax) / qmax;
      for (int cch = 0; cch < cfg.channels; ++cch) s.image.at3(cch, y, x) = v;
    }
  }
  return s;
}

}  // namespace

Sample generate_scene(const SceneConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  const SceneContent content = draw_content(cfg, rng);
  const SceneConditions cond = draw_conditions(cfg, rng);
  return render_scene(cfg, content, cond, rng);
}

Sample generate_scene_at(const SceneConfig& cfg, const SceneConditions& cond,
                         std::mt19937_64& rng) {
  cfg.validate();
  const SceneContent content = draw_content(cfg, rng);
  return render_scene(cfg, content, cond, rng);
}

std::vector<Sample> generate_dataset(const SceneConfig& cfg, uint64_t seed_base, int count) {
  std::vector<Sample> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    std::mt19937_64 rng(seed_base + static_cast<uint64_t>(i) * 0x9e3779b97f4a7c15ULL);
    out.push_back(generate_scene(cfg, rng));
  }
  return out;
}

std::vector<Sample> generate_sequence(const SceneConfig& cfg, uint64_t seed, int count,
                                      double drift) {
  cfg.validate();
  if (count < 1) throw ConfigError("generate_sequence: count must be >= 1");
  if (!(drift >= 0.0 && drift <= 1.0))
    throw ConfigError("generate_sequence: drift must be in [0,1]");

  std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + 0x517cc1b727220a95ULL);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> n01(0.0, 1.0);

  // conditions tracked in a normalized [0,1] coordinate per range; a reflected
  // random walk keeps consecutive frames under near-identical conditions
  double u[4];
  for (double& v : u) v = u01(rng);
  auto reflect = [](double v) {
    v = std::fabs(v);
    if (v > 1.0) v = 2.0 - v;
    return std::min(1.0, std::max(0.0, v));
  };

  const double log_lo = std::log(cfg.exposure_min), log_hi = std::log(cfg.exposure_max);
  std::vector<Sample> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    if (i > 0)
      for (double& v : u) v = reflect(v + drift * n01(rng));
    SceneConditions cond;
    cond.gamma = cfg.scene_gamma_min + (cfg.scene_gamma_max - cfg.scene_gamma_min) * u[0];
    cond.exposure = std::exp(log_lo + (log_hi - log_lo) * u[1]);
    cond.read_sigma = cfg.read_noise_min + (cfg.read_noise_max - cfg.read_noise_min) * u[2];
    cond.shot_gain =
        cfg.shot_noise_gain_min + (cfg.shot_noise_gain_max - cfg.shot_noise_gain_min) * u[3];
    out.push_back(generate_scene_at(cfg, cond, rng));
  }
  return out;
}

SurrogateModel::SurrogateModel(int in_channels, int num_classes, Widths widths)
    : in_channels_(in_channels), num_classes_(num_classes), widths_(widths) {}

namespace {
Tensor he_conv(std::vector<int> shape, std::mt19937_64& rng) {
  const int fan_in = shape[1] * shape[2] * shape[3];
  return randn(std::move(shape), rng, std::sqrt(2.0 / fan_in));
}
}  // namespace

void SurrogateModel::init_params(ParamStore& store, std::mt19937_64& rng) const {
  store.add("net/conv1_w", he_conv({widths_.c1, in_channels_, 3, 3}, rng));
  store.add("net/conv1_b", Tensor({widths_.c1}));
  store.add("net/conv2_w", he_conv({widths_.c2, widths_.c1, 3, 3}, rng));
  store.add("net/conv2_b", Tensor({widths_.c2}));
  store.add("net/conv3_w", he_conv({widths_.c3, widths_.c2, 3, 3}, rng));
  store.add("net/conv3_b", Tensor({widths_.c3}));
  store.add("net/fc_w", randn({num_classes_, widths_.c3}, rng, std::sqrt(1.0 / widths_.c3)));
  store.add("net/fc_b", Tensor({num_classes_}));
}

struct SurrogateModel::Trace::Impl {
  bool has_head = false;
  GradRecord c1, b1, r1, c2, b2, r2;           // stage 1
  GradRecord c3, b3, r3, pool, head_fc;        // head
};

SurrogateModel::Trace SurrogateModel::forward_backbone(const ParamStore& store,
                                                       const Tensor& image) const {
  if (image.rank() != 3 || image.extent(0) != in_channels_)
    throw ShapeError("surrogate: image must be {" + std::to_string(in_channels_) + ",H,W}, got " +
                     image.shape_str());
  auto impl = std::make_shared<Trace::Impl>();
  impl->c1 = conv2d(image, store.get("net/conv1_w"), 2, Pad::Reflect);
  impl->b1 = add_channel_bias(impl->c1.output, store.get("net/conv1_b"));
  impl->r1 = relu(impl->b1.output);
  impl->c2 = conv2d(impl->r1.output, store.get("net/conv2_w"), 2, Pad::Reflect);
  impl->b2 = add_channel_bias(impl->c2.output, store.get("net/conv2_b"));
  impl->r2 = relu(impl->b2.output);

  Trace t;
  t.feature = impl->r2.output;
  t.impl = impl;
  return t;
}

SurrogateModel::Trace SurrogateModel::forward(const ParamStore& store, const Tensor& image) const {
  Trace t = forward_backbone(store, image);
  auto impl = std::const_pointer_cast<Trace::Impl>(t.impl);
  impl->has_head = true;
  impl->c3 = conv2d(t.feature, store.get("net/conv3_w"), 2, Pad::Reflect);
  impl->b3 = add_channel_bias(impl->c3.output, store.get("net/conv3_b"));
  impl->r3 = relu(impl->b3.output);
  impl->pool = global_avg_pool(impl->r3.output);
  impl->head_fc = fc(impl->pool.output, store.get("net/fc_w"), store.get("net/fc_b"));
  t.logits = impl->head_fc.output;
  return t;
}

Tensor SurrogateModel::Trace::backward(const Tensor& d_logits, const Tensor* d_feature,
                                       GradMap& grads) const {
  Tensor d_feat;
  if (impl->has_head) {
    auto g_fc = impl->head_fc.backward(d_logits);
    accumulate(grads, "net/fc_w", g_fc[1]);
    accumulate(grads, "net/fc_b", g_fc[2]);
    Tensor d_pool = impl->pool.backward(g_fc[0])[0];
    Tensor d_r3 = impl->r3.backward(d_pool)[0];
    auto g_b3 = impl->b3.backward(d_r3);
    accumulate(grads, "net/conv3_b", g_b3[1]);
    auto g_c3 = impl->c3.backward(g_b3[0]);
    accumulate(grads, "net/conv3_w", g_c3[1]);
    d_feat = std::move(g_c3[0]);
    if (d_feature) axpy(1.0, *d_feature, d_feat);
  } else {
    if (!d_feature) throw ShapeError("surrogate backward: no upstream gradient");
    d_feat = *d_feature;
  }

  Tensor d_r2 = impl->r2.backward(d_feat)[0];
  auto g_b2 = impl->b2.backward(d_r2);
  accumulate(grads, "net/conv2_b", g_b2[1]);
  auto g_c2 = impl->c2.backward(g_b2[0]);
  accumulate(grads, "net/conv2_w", g_c2[1]);
  Tensor d_r1 = impl->r1.backward(g_c2[0])[0];
  auto g_b1 = impl->b1.backward(d_r1);
  accumulate(grads, "net/conv1_b", g_b1[1]);
  auto g_c1 = impl->c1.backward(g_b1[0]);
  accumulate(grads, "net/conv1_w", g_c1[1]);
  return g_c1[0];
}

FlopGraph SurrogateModel::flops(int h, int w) const {
  auto half = [](int n) { return (n - 1) / 2 + 1; };
  const int h1 = half(h), w1 = half(w);
  const int h2 = half(h1), w2 = half(w1);
  const int h3 = half(h2), w3 = half(w2);
  FlopGraph g;
  g.push_back({"conv2d",
               {{"f", widths_.c1}, {"c", in_channels_}, {"k", 3}, {"h_out", h1}, {"w_out", w1}}});
  g.push_back(
      {"conv2d", {{"f", widths_.c2}, {"c", widths_.c1}, {"k", 3}, {"h_out", h2}, {"w_out", w2}}});
  g.push_back(
      {"conv2d", {{"f", widths_.c3}, {"c", widths_.c2}, {"k", 3}, {"h_out", h3}, {"w_out", w3}}});
  g.push_back({"fc", {{"n_in", widths_.c3}, {"n_out", num_classes_}}});
  return g;
}

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.size() != labels.size())
    throw ShapeError("accuracy: " + std::to_string(predictions.size()) + " predictions vs " +
                     std::to_string(labels.size()) + " labels");
  if (predictions.empty()) throw ConfigError("accuracy: empty prediction set");
  int correct = 0;
  for (size_t i = 0; i < predictions.size(); ++i)
    if (predictions[i] == labels[i]) ++correct;
  return static_cast<double>(correct) / predictions.size();
}

int argmax_label(const Tensor& logits) {
  int best = 0;
  for (int i = 1; i < logits.extent(0); ++i)
    if (logits[i] > logits[best]) best = i;
  return best;
}

}  // namespace disp
