#include "disp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"

namespace disp {

void TrainConfig::validate() const {
  if (epochs_phase1 < 1 || epochs_phase2 < 0) throw ConfigError("epochs must be positive");
  if (!(lr_min > 0 && lr_min < lr_max)) throw ConfigError("need 0 < lr_min < lr_max");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (train_images < 1 || test_images < 1) throw ConfigError("dataset sizes must be >= 1");
  if (init_burnin_steps < 0) throw ConfigError("init_burnin_steps must be >= 0");
  if (!(seq_blend > 0.0 && seq_blend <= 1.0)) throw ConfigError("need 0 < seq_blend <= 1");
  if (buffer_capacity < 1) throw ConfigError("buffer_capacity must be >= 1");
}

RunConfig default_run_config() {
  RunConfig cfg;
  StageSpec gm;
  gm.kind = IspKind::GM;
  gm.specs = default_param_specs(IspKind::GM);
  gm.default_preact.assign(3, 0.0);
  cfg.pipeline.stages.push_back(gm);
  return cfg;
}

namespace {

std::vector<ParamSpec> concat_specs(const PipelineSpec& pipe) {
  std::vector<ParamSpec> out;
  for (const StageSpec& st : pipe.stages)
    out.insert(out.end(), st.specs.begin(), st.specs.end());
  return out;
}

}  // namespace

Trainer::Trainer(RunConfig cfg)
    : cfg_(std::move(cfg)),
      surrogate_(cfg_.synth.channels, cfg_.synth.num_classes, cfg_.net),
      buffer_(concat_specs(cfg_.pipeline), cfg_.trainer.buffer_capacity, cfg_.trainer.ma_decay),
      rng_(cfg_.trainer.seed) {
  cfg_.trainer.validate();
  cfg_.pipeline.validate();
  cfg_.synth.validate();

  controller_ = std::make_unique<Controller>(cfg_.controller, cfg_.pipeline, cfg_.net.c2);

  std::mt19937_64 init_rng(cfg_.trainer.seed * 0x2545F4914F6CDD1DULL + 1);
  surrogate_.init_params(store_, init_rng);
  controller_->init_params(store_, init_rng);

  train_ = generate_dataset(cfg_.synth, cfg_.synth.seed * 1000003ULL, cfg_.trainer.train_images);
  test_ = generate_dataset(cfg_.synth, cfg_.synth.seed * 1000003ULL + 0x40000000ULL,
                           cfg_.trainer.test_images);
}

std::vector<double> Trainer::flatten(const std::vector<ParamSet>& sets) {
  std::vector<double> out;
  for (const ParamSet& ps : sets) out.insert(out.end(), ps.values.begin(), ps.values.end());
  return out;
}

std::vector<ParamSet> Trainer::unflatten(const std::vector<double>& flat) const {
  std::vector<ParamSet> out;
  size_t pos = 0;
  for (const StageSpec& st : cfg_.pipeline.stages) {
    const int n = isp_param_count(st.kind);
    if (pos + n > flat.size()) throw ShapeError("unflatten: parameter vector too short");
    ParamSet ps;
    ps.kind = st.kind;
    ps.values.assign(flat.begin() + pos, flat.begin() + pos + n);
    out.push_back(std::move(ps));
    pos += n;
  }
  if (pos != flat.size()) throw ShapeError("unflatten: parameter vector too long");
  return out;
}

std::vector<double> Trainer::static_param_values() const {
  return flatten(controller_->static_params(store_));
}

double Trainer::run_batch(const std::vector<const Sample*>& batch, bool dynamic, GradMap& grads) {
  InitStrategy strat = cfg_.trainer.init_strategy;
  if ((strat == InitStrategy::Buffer || strat == InitStrategy::Gaussian) &&
      dyn_steps_ < cfg_.trainer.init_burnin_steps)
    strat = InitStrategy::Uniform;  // the buffer holds untrained predictions
  if (dynamic) ++dyn_steps_;

  double loss_sum = 0.0;
  for (const Sample* sample : batch) {
    const Tensor& x = sample->image;
    if (dynamic) {
      // frame 1: sampled params -> ISP -> backbone tap -> controller
      const std::vector<double> p0 = buffer_.sample(strat, static_param_values(), rng_);
      GradRecord isp1 = apply_pipeline(x, cfg_.pipeline, unflatten(p0));
      SurrogateModel::Trace bb = surrogate_.forward_backbone(store_, isp1.output);
      Controller::Trace ctrace = controller_->forward(store_, bb.feature);
      buffer_.push(flatten(ctrace.params));

      // frame 2 (identical image): predicted params -> ISP -> full model
      GradRecord isp2 = apply_pipeline(x, cfg_.pipeline, ctrace.params);
      SurrogateModel::Trace full = surrogate_.forward(store_, isp2.output);
      GradRecord loss = softmax_cross_entropy(full.logits, sample->label);
      if (!std::isfinite(loss.output[0]))
        throw NumericError("train_step_two_frame: non-finite loss after frame-2 surrogate");
      loss_sum += loss.output[0];

      Tensor d_logits = loss.backward(Tensor::scalar(1.0))[0];
      Tensor d_isp2_out = full.backward(d_logits, nullptr, grads);
      std::vector<Tensor> isp2_grads = isp2.backward(d_isp2_out);
      std::vector<Tensor> d_params(isp2_grads.begin() + 1, isp2_grads.end());
      Tensor d_feature = ctrace.backward(d_params, grads);
      bb.backward(Tensor(), &d_feature, grads);  // frame-1 backbone weights
    } else {
      // static diff-tuning: p = act_range(p_hat), no controller
      std::vector<ParamSet> params = controller_->static_params(store_);
      GradRecord isp = apply_pipeline(x, cfg_.pipeline, params);
      SurrogateModel::Trace full = surrogate_.forward(store_, isp.output);
      GradRecord loss = softmax_cross_entropy(full.logits, sample->label);
      if (!std::isfinite(loss.output[0]))
        throw NumericError("train_step_static: non-finite loss after surrogate");
      loss_sum += loss.output[0];

      Tensor d_logits = loss.backward(Tensor::scalar(1.0))[0];
      Tensor d_isp_out = full.backward(d_logits, nullptr, grads);
      std::vector<Tensor> isp_grads = isp.backward(d_isp_out);
      for (size_t l = 0; l < cfg_.pipeline.stages.size(); ++l) {
        const StageSpec& st = cfg_.pipeline.stages[l];
        const Tensor& p_hat = store_.get(Controller::p_hat_name(l));
        Tensor d_hat({isp_param_count(st.kind)});
        for (int n = 0; n < d_hat.extent(0); ++n)
          d_hat[n] = isp_grads[l + 1][n] * act_range_deriv(p_hat[n], st.specs[n]);
        accumulate(grads, Controller::p_hat_name(l), d_hat);
      }
    }
  }

  const double scale = 1.0 / batch.size();
  for (auto& [name, g] : grads)
    for (double& v : g.data) v *= scale;
  return loss_sum * scale;
}

double Trainer::train_step_two_frame(const std::vector<const Sample*>& batch) {
  GradMap grads;
  const double loss = run_batch(batch, true, grads);
  adam_step(opt_, store_, grads, trainable_);
  return loss;
}

double Trainer::train_step_static(const std::vector<const Sample*>& batch) {
  GradMap grads;
  const double loss = run_batch(batch, false, grads);
  adam_step(opt_, store_, grads, trainable_);
  return loss;
}

void Trainer::run_phase(int phase, int epochs, bool dynamic,
                        const std::function<bool(const std::string&)>& trainable,
                        std::ostream* metrics) {
  if (epochs < 1) return;
  const int B = cfg_.trainer.batch_size;
  const int spe = (static_cast<int>(train_.size()) + B - 1) / B;

  opt_ = OptimizerState{};
  opt_.cfg.lr_max = cfg_.trainer.lr_max;
  opt_.cfg.lr_min = cfg_.trainer.lr_min;
  opt_.cfg.warmup_steps = cfg_.trainer.warmup_steps;
  opt_.cfg.total_steps = epochs * spe;
  opt_.group_lr_mult["ctrl/"] = cfg_.trainer.controller_lr_mult;
  // in two-frame training p_hat is an anchor the controller works around, so
  // it may want a gentler rate than static tuning, where it is the whole model
  if (dynamic) opt_.group_lr_mult["isp/"] = cfg_.trainer.p_hat_lr_mult;
  trainable_ = trainable;

  std::vector<size_t> idx(train_.size());
  std::iota(idx.begin(), idx.end(), size_t{0});

  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), rng_);
    double loss_sum = 0.0;
    int batches = 0;
    for (size_t start = 0; start < idx.size(); start += B) {
      std::vector<const Sample*> batch;
      for (size_t i = start; i < std::min(idx.size(), start + B); ++i)
        batch.push_back(&train_[idx[i]]);
      loss_sum += dynamic ? train_step_two_frame(batch) : train_step_static(batch);
      ++batches;
    }

    if (metrics) {
      EvalResult ev = dynamic ? evaluate(test_, EvalMode::Twice) : evaluate_static(test_);
      const size_t P = ev.param_log.empty() ? 0 : ev.param_log[0].size();
      std::vector<double> mean(P, 0.0), stdev(P, 0.0);
      for (const auto& v : ev.param_log)
        for (size_t i = 0; i < P; ++i) mean[i] += v[i];
      for (size_t i = 0; i < P; ++i) mean[i] /= std::max<size_t>(1, ev.param_log.size());
      for (const auto& v : ev.param_log)
        for (size_t i = 0; i < P; ++i) stdev[i] += (v[i] - mean[i]) * (v[i] - mean[i]);
      for (size_t i = 0; i < P; ++i)
        stdev[i] = std::sqrt(stdev[i] / std::max<size_t>(1, ev.param_log.size()));

      nlohmann::json rec{{"phase", phase},        {"epoch", epoch},
                         {"loss", loss_sum / std::max(1, batches)},
                         {"accuracy", ev.accuracy}, {"param_mean", mean},
                         {"param_std", stdev}};
      (*metrics) << rec.dump() << "\n";
    }
  }
  trainable_ = nullptr;
}

void Trainer::fit(std::ostream* metrics) {
  run_phase(1, cfg_.trainer.epochs_phase1, true, nullptr, metrics);
  auto net_only = [](const std::string& n) { return n.rfind("net/", 0) == 0; };
  run_phase(2, cfg_.trainer.epochs_phase2, true, net_only, metrics);
}

void Trainer::tune_static(std::ostream* metrics) {
  run_phase(1, cfg_.trainer.epochs_phase1, false, nullptr, metrics);
  auto net_only = [](const std::string& n) { return n.rfind("net/", 0) == 0; };
  run_phase(2, cfg_.trainer.epochs_phase2, false, net_only, metrics);
}

EvalResult Trainer::evaluate(const std::vector<Sample>& data, EvalMode mode) const {
  EvalResult res;
  std::vector<int> preds, labels;
  std::vector<double> carried = buffer_.inference_initial(static_param_values());

  for (const Sample& sample : data) {
    if (mode == EvalMode::Twice) {
      const std::vector<double> p0 = buffer_.inference_initial(static_param_values());
      GradRecord isp1 = apply_pipeline(sample.image, cfg_.pipeline, unflatten(p0));
      SurrogateModel::Trace bb = surrogate_.forward_backbone(store_, isp1.output);
      Controller::Trace ctrace = controller_->forward(store_, bb.feature);
      GradRecord isp2 = apply_pipeline(sample.image, cfg_.pipeline, ctrace.params);
      SurrogateModel::Trace full = surrogate_.forward(store_, isp2.output);
      preds.push_back(argmax_label(full.logits));
      res.param_log.push_back(flatten(ctrace.params));
    } else {
      GradRecord isp = apply_pipeline(sample.image, cfg_.pipeline, unflatten(carried));
      SurrogateModel::Trace full = surrogate_.forward(store_, isp.output);
      preds.push_back(argmax_label(full.logits));
      res.param_log.push_back(carried);
      Controller::Trace ctrace = controller_->forward(store_, full.feature);
      const std::vector<double> pred = flatten(ctrace.params);
      for (size_t i = 0; i < carried.size(); ++i)
        carried[i] += cfg_.trainer.seq_blend * (pred[i] - carried[i]);
    }
    labels.push_back(sample.label);
  }
  res.accuracy = accuracy(preds, labels);
  return res;
}

EvalResult Trainer::evaluate_static(const std::vector<Sample>& data) const {
  EvalResult res;
  std::vector<int> preds, labels;
  const std::vector<ParamSet> params = controller_->static_params(store_);
  const std::vector<double> flat = flatten(params);
  for (const Sample& sample : data) {
    GradRecord isp = apply_pipeline(sample.image, cfg_.pipeline, params);
    SurrogateModel::Trace full = surrogate_.forward(store_, isp.output);
    preds.push_back(argmax_label(full.logits));
    res.param_log.push_back(flat);
    labels.push_back(sample.label);
  }
  res.accuracy = accuracy(preds, labels);
  return res;
}

GridSearchResult grid_search_gamma(const RunConfig& cfg, const std::vector<double>& grid,
                                   std::ostream* metrics) {
  if (grid.empty()) throw ConfigError("grid_search_gamma: empty grid");
  cfg.trainer.validate();
  cfg.synth.validate();

  const std::vector<Sample> train_raw =
      generate_dataset(cfg.synth, cfg.synth.seed * 1000003ULL, cfg.trainer.train_images);
  const std::vector<Sample> test_raw = generate_dataset(
      cfg.synth, cfg.synth.seed * 1000003ULL + 0x40000000ULL, cfg.trainer.test_images);

  GridSearchResult res;
  for (double gamma : grid) {
    if (!(gamma > 0)) throw ConfigError("grid_search_gamma: gamma must be positive");
    auto apply = [&](const std::vector<Sample>& src) {
      std::vector<Sample> out = src;
      for (Sample& s : out)
        for (double& v : s.image.data) v = std::pow(std::max(0.0, v), 1.0 / gamma);
      return out;
    };
    const std::vector<Sample> train = apply(train_raw);
    const std::vector<Sample> test = apply(test_raw);

    SurrogateModel net(cfg.synth.channels, cfg.synth.num_classes, cfg.net);
    ParamStore store;
    std::mt19937_64 init_rng(cfg.trainer.seed * 0x2545F4914F6CDD1DULL + 1);
    net.init_params(store, init_rng);
    std::mt19937_64 rng(cfg.trainer.seed);

    const int B = cfg.trainer.batch_size;
    const int spe = (static_cast<int>(train.size()) + B - 1) / B;
    const int epochs = cfg.trainer.epochs_phase1 + cfg.trainer.epochs_phase2;
    OptimizerState opt;
    opt.cfg.lr_max = cfg.trainer.lr_max;
    opt.cfg.lr_min = cfg.trainer.lr_min;
    opt.cfg.warmup_steps = cfg.trainer.warmup_steps;
    opt.cfg.total_steps = epochs * spe;

    std::vector<size_t> idx(train.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    for (int epoch = 0; epoch < epochs; ++epoch) {
      std::shuffle(idx.begin(), idx.end(), rng);
      for (size_t start = 0; start < idx.size(); start += B) {
        GradMap grads;
        int n = 0;
        for (size_t i = start; i < std::min(idx.size(), start + B); ++i, ++n) {
          const Sample& s = train[idx[i]];
          SurrogateModel::Trace full = net.forward(store, s.image);
          GradRecord loss = softmax_cross_entropy(full.logits, s.label);
          Tensor d_logits = loss.backward(Tensor::scalar(1.0))[0];
          full.backward(d_logits, nullptr, grads);
        }
        for (auto& [name, g] : grads)
          for (double& v : g.data) v /= n;
        adam_step(opt, store, grads);
      }
    }

    std::vector<int> preds, labels;
    for (const Sample& s : test) {
      preds.push_back(argmax_label(net.forward(store, s.image).logits));
      labels.push_back(s.label);
    }
    const double acc = accuracy(preds, labels);
    res.gammas.push_back(gamma);
    res.scores.push_back(acc);
    if (metrics) {
      nlohmann::json rec{{"gamma", gamma}, {"accuracy", acc}};
      (*metrics) << rec.dump() << "\n";
    }
    if (res.scores.size() == 1 || acc > res.best_score) {
      res.best_score = acc;
      res.best_gamma = gamma;
    }
  }
  return res;
}

}  // namespace disp
