#include "disp/ablate.hpp"

#include <iomanip>

namespace disp {

StageSpec make_stage(IspKind kind) {
  StageSpec st;
  st.kind = kind;
  st.specs = default_param_specs(kind);
  st.default_preact.assign(st.specs.size(), 0.0);
  return st;
}

RunConfig desk_scale_config() {
  RunConfig cfg = default_run_config();
  cfg.trainer.epochs_phase1 = 8;
  cfg.trainer.epochs_phase2 = 4;
  cfg.trainer.lr_max = 1e-2;
  cfg.trainer.warmup_steps = 50;
  cfg.trainer.train_images = 600;
  cfg.trainer.test_images = 400;
  cfg.trainer.batch_size = 16;
  cfg.controller.latent_width = 64;
  cfg.controller.sfb_fc_width = 128;
  cfg.controller.update_hidden = 32;
  // mid-exposure scenes with a strong per-image tone distortion: the part of
  // the degradation a tone-mapping stage can actually undo
  cfg.synth.exposure_min = 0.15;
  cfg.synth.exposure_max = 1.0;
  cfg.synth.scene_gamma_min = 0.3;
  cfg.synth.scene_gamma_max = 1.2;
  cfg.synth.read_noise_max = 0.002;
  cfg.synth.shot_noise_gain_max = 0.0005;
  // a deliberately small classifier: with a large one the net learns the
  // distortion invariance itself and every arm saturates
  cfg.net = {4, 8, 8};
  // allow exponents up to 1/0.4 so the distortion range stays invertible, and
  // start near the identity (g1 ~ 1) instead of the heavily compressive
  // mid-range default
  cfg.pipeline.stages[0].specs[0].p_min = 0.4;
  cfg.pipeline.stages[0].default_preact[0] = -1.9;
  return cfg;
}

RunConfig component_scale_config() {
  RunConfig cfg = desk_scale_config();
  // at 8+4 epochs several seeds never leave chance level and every comparison
  // drowns in seed noise; 16+8 trains all seeds to a stable operating point
  cfg.trainer.epochs_phase1 = 16;
  cfg.trainer.epochs_phase2 = 8;
  cfg.trainer.init_burnin_steps = 150;  // ~4 epochs of uniform exploration
  // a learnable p_hat that moves as fast as the net drags the anchor out from
  // under the residual heads; give it a gentler rate
  cfg.trainer.p_hat_lr_mult = 0.3;
  // Plain-mode heads decode straight through act_range, so their zero start
  // lands mid-bounds; keep the tone bounds gentle enough that a mid-bounds
  // gamma still leaves the classifier trainable
  cfg.pipeline.stages[0].specs[0].p_max = 2.5;
  cfg.pipeline.stages[0].default_preact[0] = -0.92;  // act_range ~ 1 (identity)
  // darker scenes and a milder tone spread: whether the first frame carries
  // any signal into the controller now hinges on the parameter initializer
  cfg.synth.exposure_min = 0.05;
  cfg.synth.scene_gamma_min = 0.6;
  cfg.synth.scene_gamma_max = 1.2;
  cfg.net = {6, 12, 12};
  return cfg;
}

RunConfig four_stage_config() {
  RunConfig cfg = component_scale_config();
  // with four stages the uniform burn-in renders are too wild to learn from,
  // and the wide parameter vector tolerates the full p_hat rate
  cfg.trainer.init_burnin_steps = 0;
  cfg.trainer.p_hat_lr_mult = 1.0;
  StageSpec gm = cfg.pipeline.stages[0];  // keep the tuned GM bounds and init
  StageSpec cs = make_stage(IspKind::CS);
  cs.default_preact = {-1.4, 0.0};  // q_b near 1: start close to the identity
  cfg.pipeline.stages = {make_stage(IspKind::DN), make_stage(IspKind::SN), gm, cs};
  return cfg;
}

AblationRow run_dynamic_row(const std::string& label, RunConfig cfg,
                            const std::vector<uint64_t>& seeds) {
  AblationRow row;
  row.label = label;
  for (uint64_t seed : seeds) {
    cfg.trainer.seed = seed;
    Trainer t(cfg);
    t.fit(nullptr);
    row.seed_accuracy.push_back(t.evaluate(t.test_set(), EvalMode::Twice).accuracy);
  }
  for (double a : row.seed_accuracy) row.mean += a;
  row.mean /= row.seed_accuracy.size();
  return row;
}

AblationRow run_static_row(const std::string& label, RunConfig cfg,
                           const std::vector<uint64_t>& seeds) {
  AblationRow row;
  row.label = label;
  for (uint64_t seed : seeds) {
    cfg.trainer.seed = seed;
    Trainer t(cfg);
    t.tune_static(nullptr);
    row.seed_accuracy.push_back(t.evaluate_static(t.test_set()).accuracy);
  }
  for (double a : row.seed_accuracy) row.mean += a;
  row.mean /= row.seed_accuracy.size();
  return row;
}

AblationReport ablate_components(const RunConfig& base, const std::vector<uint64_t>& seeds) {
  AblationReport rep;
  rep.title = "controller components (added one by one)";

  RunConfig c = base;
  c.controller.mode = ControlMode::Plain;
  c.trainer.init_strategy = InitStrategy::None;
  rep.rows.push_back(run_dynamic_row("baseline", c, seeds));

  c.trainer.init_strategy = InitStrategy::Buffer;
  rep.rows.push_back(run_dynamic_row("+PI", c, seeds));

  c.controller.mode = ControlMode::ResidualStatic;
  rep.rows.push_back(run_dynamic_row("+PI+RO", c, seeds));

  c.controller.mode = ControlMode::ResidualLearnable;
  rep.rows.push_back(run_dynamic_row("+PI+RO+", c, seeds));
  return rep;
}

AblationReport ablate_initializer(const RunConfig& base, const std::vector<uint64_t>& seeds) {
  AblationReport rep;
  rep.title = "parameter initializer strategies";
  for (InitStrategy s :
       {InitStrategy::None, InitStrategy::Uniform, InitStrategy::Gaussian, InitStrategy::Buffer}) {
    RunConfig c = base;
    c.controller.mode = ControlMode::Plain;
    c.trainer.init_strategy = s;
    rep.rows.push_back(run_dynamic_row(init_strategy_name(s), c, seeds));
  }
  return rep;
}

AblationReport ablate_static_vs_dynamic(const RunConfig& base, const std::vector<uint64_t>& seeds,
                                        const std::vector<double>& gamma_grid) {
  AblationReport rep;
  rep.title = "static tuning vs dynamic control";

  AblationRow grid_row;
  grid_row.label = "grid search (simple gamma)";
  for (uint64_t seed : seeds) {
    RunConfig c = base;
    c.trainer.seed = seed;
    GridSearchResult g = grid_search_gamma(c, gamma_grid);
    grid_row.seed_accuracy.push_back(g.best_score);
  }
  for (double a : grid_row.seed_accuracy) grid_row.mean += a;
  grid_row.mean /= grid_row.seed_accuracy.size();
  rep.rows.push_back(grid_row);

  // both tuned arms train to saturation; static single-frame steps are much
  // cheaper, so equal epoch counts still favor the dynamic arm in wall clock
  RunConfig stat = base;
  stat.trainer.epochs_phase1 = 16;
  stat.trainer.epochs_phase2 = 8;
  rep.rows.push_back(run_static_row("diff. tuning", stat, seeds));

  RunConfig dyn = base;
  dyn.controller.mode = ControlMode::ResidualLearnable;
  dyn.trainer.init_strategy = InitStrategy::Buffer;
  dyn.trainer.epochs_phase1 = 16;
  dyn.trainer.epochs_phase2 = 8;
  rep.rows.push_back(run_dynamic_row("dynamic control", dyn, seeds));
  return rep;
}

AblationReport ablate_latent_update(const RunConfig& base, const std::vector<uint64_t>& seeds) {
  AblationReport rep;
  rep.title = "latent update on the four-stage pipeline";

  RunConfig c = base;
  c.controller.mode = ControlMode::ResidualLearnable;
  c.trainer.init_strategy = InitStrategy::Buffer;

  c.controller.latent_update = false;
  rep.rows.push_back(run_dynamic_row("w/o LU", c, seeds));
  c.controller.latent_update = true;
  rep.rows.push_back(run_dynamic_row("w/ LU", c, seeds));
  return rep;
}

void print_report(const AblationReport& report, std::ostream& os) {
  os << report.title << "\n";
  for (const AblationRow& row : report.rows) {
    os << "  " << std::left << std::setw(28) << row.label << " mean " << std::fixed
       << std::setprecision(4) << row.mean << "  seeds [";
    for (size_t i = 0; i < row.seed_accuracy.size(); ++i)
      os << (i ? " " : "") << std::setprecision(4) << row.seed_accuracy[i];
    os << "]\n";
  }
}

}  // namespace disp
