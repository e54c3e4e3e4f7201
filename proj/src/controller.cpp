#include "disp/controller.hpp"

#include <cmath>

namespace disp {

double act_range(double x, const ParamSpec& spec) {
  return (spec.p_max - spec.p_min) * sigmoid_scalar(x) + spec.p_min;
}

double act_range_deriv(double x, const ParamSpec& spec) {
  const double s = sigmoid_scalar(x);
  return (spec.p_max - spec.p_min) * s * (1.0 - s);
}

std::string control_mode_name(ControlMode m) {
  switch (m) {
    case ControlMode::Plain: return "plain";
    case ControlMode::ResidualStatic: return "residual_static";
    case ControlMode::ResidualLearnable: return "residual_learnable";
  }
  throw ConfigError("bad ControlMode");
}

ControlMode control_mode_from_name(const std::string& s) {
  if (s == "plain") return ControlMode::Plain;
  if (s == "residual_static") return ControlMode::ResidualStatic;
  if (s == "residual_learnable") return ControlMode::ResidualLearnable;
  throw ConfigError("unknown controller mode '" + s + "'");
}

Controller::Controller(ControllerConfig cfg, PipelineSpec pipeline, int feature_channels)
    : cfg_(std::move(cfg)), pipeline_(std::move(pipeline)), feature_channels_(feature_channels) {
  pipeline_.validate();
  if (cfg_.latent_width < 1 || cfg_.sfb_channels < 1 || cfg_.sfb_fc_width < 1 ||
      cfg_.update_hidden < 1)
    throw ConfigError("controller widths must be positive");
}

namespace {

Tensor he_init(std::vector<int> shape, int fan_in, std::mt19937_64& rng) {
  return randn(std::move(shape), rng, std::sqrt(2.0 / fan_in));
}

}  // namespace

void Controller::init_params(ParamStore& store, std::mt19937_64& rng) const {
  const int S = cfg_.sfb_channels, Fw = cfg_.sfb_fc_width, L = cfg_.latent_width;
  store.add("ctrl/sfb/conv_w", he_init({S, feature_channels_, 3, 3}, feature_channels_ * 9, rng));
  store.add("ctrl/sfb/conv_b", Tensor({S}));
  store.add("ctrl/sfb/fc1_w", he_init({Fw, S}, S, rng));
  store.add("ctrl/sfb/fc1_b", Tensor({Fw}));
  store.add("ctrl/sfb/fc2_w", he_init({L, Fw}, Fw, rng));
  store.add("ctrl/sfb/fc2_b", Tensor({L}));

  for (size_t l = 0; l < pipeline_.stages.size(); ++l) {
    const StageSpec& st = pipeline_.stages[l];
    const int N = isp_param_count(st.kind);
    const std::string head = "ctrl/head" + std::to_string(l);
    store.add(head + "/dec_w", Tensor({N, L}));  // zero-init: start at static behavior
    store.add(head + "/dec_b", Tensor({N}));
    store.add(head + "/up_w1", he_init({cfg_.update_hidden, N}, N, rng));
    store.add(head + "/up_b1", Tensor({cfg_.update_hidden}));
    store.add(head + "/up_w2", he_init({L, cfg_.update_hidden}, cfg_.update_hidden, rng));
    store.add(head + "/up_b2", Tensor({L}));

    Tensor p_hat({N});
    p_hat.data = st.default_preact;
    store.add(p_hat_name(l), std::move(p_hat));
  }
}

struct Controller::Trace::Impl {
  const Controller* owner = nullptr;
  Tensor feature;
  GradRecord sfb_conv, sfb_bias, sfb_gap, sfb_fc1, sfb_relu, sfb_fc2;
  Tensor v0;

  struct Head {
    GradRecord dec_fc;           // fc(V_prev)
    std::vector<double> z;       // pre-activation (p_hat + fc output)
    Tensor v_prev;
    // latent update (only when latent_update is on)
    GradRecord up_fc1, up_relu, up_fc2, up_gate_sig;
    Tensor gate;
  };
  std::vector<Head> heads;
};

Controller::Trace Controller::forward(const ParamStore& store, const Tensor& feature) const {
  if (feature.rank() != 3 || feature.extent(0) != feature_channels_)
    throw ShapeError("controller: feature must be {" + std::to_string(feature_channels_) +
                     ",H,W}, got " + feature.shape_str());
  if (feature.extent(1) < 3 || feature.extent(2) < 3)
    throw ShapeError("controller: feature spatial extent must be >= 3, got " + feature.shape_str());

  auto impl = std::make_shared<Trace::Impl>();
  impl->owner = this;
  impl->feature = feature;

  impl->sfb_conv = conv2d(feature, store.get("ctrl/sfb/conv_w"), 2, Pad::Reflect);
  impl->sfb_bias = add_channel_bias(impl->sfb_conv.output, store.get("ctrl/sfb/conv_b"));
  impl->sfb_gap = global_avg_pool(impl->sfb_bias.output);
  impl->sfb_fc1 = fc(impl->sfb_gap.output, store.get("ctrl/sfb/fc1_w"), store.get("ctrl/sfb/fc1_b"));
  impl->sfb_relu = relu(impl->sfb_fc1.output);
  impl->sfb_fc2 = fc(impl->sfb_relu.output, store.get("ctrl/sfb/fc2_w"), store.get("ctrl/sfb/fc2_b"));
  impl->v0 = impl->sfb_fc2.output;

  Trace trace;
  Tensor v = impl->v0;
  for (size_t l = 0; l < pipeline_.stages.size(); ++l) {
    const StageSpec& st = pipeline_.stages[l];
    const int N = isp_param_count(st.kind);
    const std::string head = "ctrl/head" + std::to_string(l);
    Trace::Impl::Head h;
    h.v_prev = v;
    h.dec_fc = fc(v, store.get(head + "/dec_w"), store.get(head + "/dec_b"));

    const Tensor& p_hat = store.get(p_hat_name(l));
    h.z.resize(N);
    ParamSet ps;
    ps.kind = st.kind;
    ps.values.resize(N);
    for (int n = 0; n < N; ++n) {
      double z = h.dec_fc.output[n];
      if (cfg_.mode != ControlMode::Plain) z += p_hat[n];
      h.z[n] = z;
      ps.values[n] = act_range(z, st.specs[n]);
    }
    trace.params.push_back(ps);

    if (cfg_.latent_update) {
      Tensor norm({N});
      for (int n = 0; n < N; ++n)
        norm[n] = (ps.values[n] - st.specs[n].p_min) / (st.specs[n].p_max - st.specs[n].p_min);
      h.up_fc1 = fc(norm, store.get(head + "/up_w1"), store.get(head + "/up_b1"));
      h.up_relu = relu(h.up_fc1.output);
      h.up_fc2 = fc(h.up_relu.output, store.get(head + "/up_w2"), store.get(head + "/up_b2"));
      h.up_gate_sig = sigmoid(h.up_fc2.output);
      h.gate = 5.0 * h.up_gate_sig.output;
      Tensor v_next(v.shape);
      for (int i = 0; i < cfg_.latent_width; ++i) v_next[i] = h.gate[i] * v[i];
      v = std::move(v_next);
    } else {
      v = impl->v0;  // every head decodes from the shared latent
    }
    impl->heads.push_back(std::move(h));
  }

  trace.impl = impl;
  return trace;
}

Tensor Controller::Trace::backward(const std::vector<Tensor>& d_params, GradMap& grads) const {
  const Controller& c = *impl->owner;
  const ControllerConfig& cfg = c.config();
  const PipelineSpec& pipe = c.pipeline();
  const size_t L = pipe.stages.size();
  if (d_params.size() != L)
    throw ShapeError("controller backward: expected " + std::to_string(L) + " gradient sets");

  Tensor d_v(Tensor({cfg.latent_width}));  // gradient flowing into V_l of the last stage
  Tensor d_v0({cfg.latent_width});

  for (size_t l = L; l-- > 0;) {
    const auto& h = impl->heads[l];
    const StageSpec& st = pipe.stages[l];
    const int N = isp_param_count(st.kind);
    const std::string head = "ctrl/head" + std::to_string(l);

    Tensor d_p = d_params[l];
    if (d_p.numel() != N)
      throw ShapeError("controller backward: stage " + std::to_string(l) + " gradient has " +
                       std::to_string(d_p.numel()) + " entries, expected " + std::to_string(N));

    Tensor d_v_prev({cfg.latent_width});
    if (cfg.latent_update) {
      // V_l = gate * V_{l-1}
      Tensor d_gate({cfg.latent_width});
      for (int i = 0; i < cfg.latent_width; ++i) {
        d_gate[i] = d_v[i] * h.v_prev[i];
        d_v_prev[i] = d_v[i] * h.gate[i];
      }
      // gate = 5*sigmoid(h2)
      Tensor d_sig = 5.0 * d_gate;
      Tensor d_h2 = h.up_gate_sig.backward(d_sig)[0];
      auto g2 = h.up_fc2.backward(d_h2);
      accumulate(grads, head + "/up_w2", g2[1]);
      accumulate(grads, head + "/up_b2", g2[2]);
      Tensor d_r = h.up_relu.backward(g2[0])[0];
      auto g1 = h.up_fc1.backward(d_r);
      accumulate(grads, head + "/up_w1", g1[1]);
      accumulate(grads, head + "/up_b1", g1[2]);
      // normalization: n = (p - min)/(max - min)
      for (int n = 0; n < N; ++n)
        d_p[n] += g1[0][n] / (st.specs[n].p_max - st.specs[n].p_min);
    }

    // p = act_range(z)
    Tensor d_z({N});
    for (int n = 0; n < N; ++n) d_z[n] = d_p[n] * act_range_deriv(h.z[n], st.specs[n]);
    if (cfg.mode == ControlMode::ResidualLearnable)
      accumulate(grads, Controller::p_hat_name(l), d_z);

    auto gd = h.dec_fc.backward(d_z);
    accumulate(grads, head + "/dec_w", gd[1]);
    accumulate(grads, head + "/dec_b", gd[2]);

    if (cfg.latent_update) {
      d_v = d_v_prev + gd[0];
    } else {
      axpy(1.0, gd[0], d_v0);
    }
  }

  if (cfg.latent_update) {
    d_v0 = d_v;
  }

  // SFB backward
  auto g_fc2 = impl->sfb_fc2.backward(d_v0);
  accumulate(grads, "ctrl/sfb/fc2_w", g_fc2[1]);
  accumulate(grads, "ctrl/sfb/fc2_b", g_fc2[2]);
  Tensor d_r = impl->sfb_relu.backward(g_fc2[0])[0];
  auto g_fc1 = impl->sfb_fc1.backward(d_r);
  accumulate(grads, "ctrl/sfb/fc1_w", g_fc1[1]);
  accumulate(grads, "ctrl/sfb/fc1_b", g_fc1[2]);
  Tensor d_pool = impl->sfb_gap.backward(g_fc1[0])[0];
  auto g_bias = impl->sfb_bias.backward(d_pool);
  accumulate(grads, "ctrl/sfb/conv_b", g_bias[1]);
  auto g_conv = impl->sfb_conv.backward(g_bias[0]);
  accumulate(grads, "ctrl/sfb/conv_w", g_conv[1]);
  return g_conv[0];
}

std::vector<ParamSet> Controller::static_params(const ParamStore& store) const {
  std::vector<ParamSet> out;
  for (size_t l = 0; l < pipeline_.stages.size(); ++l) {
    const StageSpec& st = pipeline_.stages[l];
    const Tensor& p_hat = store.get(p_hat_name(l));
    ParamSet ps;
    ps.kind = st.kind;
    for (int n = 0; n < isp_param_count(st.kind); ++n)
      ps.values.push_back(act_range(p_hat[n], st.specs[n]));
    out.push_back(std::move(ps));
  }
  return out;
}

FlopGraph Controller::head_flops() const {
  // decode + latent update for one representative stage (3 parameters)
  const int64_t N = 3, L = cfg_.latent_width, H = cfg_.update_hidden;
  FlopGraph g;
  g.push_back({"fc", {{"n_in", L}, {"n_out", N}}});       // f_full
  g.push_back({"eltwise", {{"n", N}}});                   // act_range
  g.push_back({"eltwise", {{"n", N}}});                   // normalization
  g.push_back({"fc", {{"n_in", N}, {"n_out", H}}});       // f_a first layer
  g.push_back({"fc", {{"n_in", H}, {"n_out", L}}});       // f_a second layer
  g.push_back({"eltwise", {{"n", L}}});                   // gate activation
  g.push_back({"eltwise", {{"n", L}}});                   // V_l = gate * V_{l-1}
  return g;
}

FlopGraph Controller::sfb_flops(int feature_h, int feature_w) const {
  const int64_t ho = (feature_h - 1) / 2 + 1, wo = (feature_w - 1) / 2 + 1;
  FlopGraph g;
  g.push_back({"conv2d",
               {{"f", cfg_.sfb_channels}, {"c", feature_channels_}, {"k", 3}, {"h_out", ho},
                {"w_out", wo}}});
  g.push_back({"fc", {{"n_in", cfg_.sfb_channels}, {"n_out", cfg_.sfb_fc_width}}});
  g.push_back({"fc", {{"n_in", cfg_.sfb_fc_width}, {"n_out", cfg_.latent_width}}});
  return g;
}

}  // namespace disp
