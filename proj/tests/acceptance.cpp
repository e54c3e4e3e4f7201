// Acceptance gate: one pass/fail line per criterion, nonzero exit on failure.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

#include "disp/ablate.hpp"
#include "disp/gradcheck.hpp"
#include "disp/io.hpp"

using namespace disp;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& what, const std::string& detail) {
  std::printf("%s  %2d. %s (%s)\n", ok ? "PASS" : "FAIL", id, what.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

double now_s() {
  using clock = std::chrono::steady_clock;
  static const clock::time_point t0 = clock::now();
  return std::chrono::duration<double>(clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

Tensor params_of(std::initializer_list<double> v) {
  std::vector<double> d(v);
  return Tensor({static_cast<int>(d.size())}, d);
}

const std::vector<uint64_t> kSeeds{1, 2, 3, 4};

// ------------------------------------------------------------ criterion 1

void criterion_gradcheck() {
  const double t0 = now_s();
  GradcheckReport rep = run_gradcheck_suite(1, 100);
  const double dt = now_s() - t0;
  double worst = 0.0;
  std::string worst_op = "-";
  for (const auto& e : rep.entries)
    if (e.max_rel_err > worst) {
      worst = e.max_rel_err;
      worst_op = e.op;
    }
  const bool ok = rep.pass() && dt < 120.0;
  report(1, ok, "gradient oracle suite, 100 instances per op",
         std::to_string(rep.entries.size()) + " ops, worst rel err " + fmt(worst, 7) + " (" +
             worst_op + "), " + fmt(dt, 1) + " s");
}

// ------------------------------------------------------------ criterion 2

double ag1(double x, double w, double h, double px) {
  return apply_ag(Tensor({1, 1, 1}, {x}), params_of({w, h, px})).output[0];
}

double gm1(double x, double g1, double g2, double pk) {
  return apply_gm(Tensor({1, 1, 1}, {x}), params_of({g1, g2, pk})).output[0];
}

void criterion_identities() {
  double worst = 0.0;
  bool ok = true;

  // AG continuity at both breakpoints, endpoint pinning, p_h == p_w identity
  for (auto [w, h, px] : {std::tuple{0.3, 0.6, 0.4}, {0.7, 0.2, 0.9}, {0.25, 0.8, 0.1}}) {
    const double t1 = px * (1.0 - w), t2 = t1 + w;
    for (double t : {t1, t2}) {
      const double gap =
          std::fabs(ag1(std::min(1.0, t + 1e-9), w, h, px) - ag1(std::max(0.0, t - 1e-9), w, h, px));
      worst = std::max(worst, gap);
      ok = ok && gap < 1e-8;
    }
    ok = ok && std::fabs(ag1(0.0, w, h, px)) < 1e-9;
    ok = ok && std::fabs(ag1(1.0, w, h, px) - 1.0) < 1e-9;
  }
  for (double x : {0.05, 0.33, 0.71, 0.98})
    ok = ok && std::fabs(ag1(x, 0.4, 0.4, 0.57) - x) < 1e-9;

  // GM fixed points X=1 and X=p_k -> p_k^(1/p_g1)
  for (auto [g1, g2, pk] : {std::tuple{2.2, 0.7, 0.4}, {0.8, 1.5, 0.25}, {4.0, 0.3, 0.9}}) {
    ok = ok && std::fabs(gm1(1.0, g1, g2, pk) - 1.0) < 1e-9;
    ok = ok && std::fabs(gm1(pk, g1, g2, pk) - std::pow(pk, 1.0 / g1)) < 1e-9;
  }

  // GF collapsed to a delta kernel leaves SN at the identity
  std::mt19937_64 rng(42);
  Tensor img = rand_uniform({1, 8, 8}, rng, 0.0, 1.0);
  const double gf_err = max_abs_diff(apply_sn(img, params_of({0.8, 0.02})).output, img);
  ok = ok && gf_err < 1e-12;

  // DN/SN preserve constant images exactly
  double const_err = 0.0;
  for (double v : {0.0, 0.37, 1.0}) {
    Tensor c = Tensor::full({1, 7, 7}, v);
    const_err = std::max(const_err, max_abs_diff(apply_dn(c, params_of({0.7, 1.2, 0.3})).output, c));
    const_err = std::max(const_err, max_abs_diff(apply_sn(c, params_of({0.6, 1.1})).output, c));
  }
  ok = ok && const_err == 0.0;

  report(2, ok, "algebraic identities (AG, GM, GF, DN/SN)",
         "worst AG jump " + fmt(worst, 12) + ", GF delta err " + fmt(gf_err, 15) +
             ", const err " + fmt(const_err, 1));
}

// ------------------------------------------------------------ criterion 3

void criterion_residual_decomposition() {
  RunConfig cfg = desk_scale_config();
  cfg.pipeline.stages.push_back(make_stage(IspKind::CS));
  cfg.controller.mode = ControlMode::ResidualLearnable;
  Trainer t(cfg);  // decode heads zero-initialized

  const Sample& s = t.test_set().front();
  // dynamic: frame-1 at static params, controller prediction, frame-2 render
  GradRecord isp1 = apply_pipeline(s.image, cfg.pipeline, t.unflatten(t.static_param_values()));
  SurrogateModel::Trace bb = t.surrogate().forward_backbone(t.params(), isp1.output);
  Controller::Trace ctrace = t.controller().forward(t.params(), bb.feature);
  Tensor dynamic_out = apply_pipeline(s.image, cfg.pipeline, ctrace.params).output;

  // static pipeline at act_range(p_hat)
  Tensor static_out =
      apply_pipeline(s.image, cfg.pipeline, t.controller().static_params(t.params())).output;

  const bool ok = dynamic_out.data.size() == static_out.data.size() &&
                  std::memcmp(dynamic_out.data.data(), static_out.data.data(),
                              dynamic_out.data.size() * sizeof(double)) == 0;
  report(3, ok, "zero-pinned decode makes dynamic output bit-equal to static",
         ok ? "bitwise equal" : "images differ");
}

// ------------------------------------------------------------ criteria 4-7

void criterion_table3() {
  const double t0 = now_s();
  AblationReport rep =
      ablate_static_vs_dynamic(desk_scale_config(), kSeeds, {0.5, 1.0, 2.0, 4.0, 8.0});
  const double dt = now_s() - t0;
  const double grid = rep.rows[0].mean, stat = rep.rows[1].mean, dyn = rep.rows[2].mean;
  const bool ok = stat - grid >= 0.01 && dyn - stat >= 0.01 && dt < 3600.0;
  report(4, ok, "grid < diff. tuning < dynamic, gaps >= 1 point (4 seeds)",
         "grid " + fmt(grid) + " < static " + fmt(stat) + " < dynamic " + fmt(dyn) + ", " +
             fmt(dt / 60.0, 1) + " min");
}

void criterion_table1() {
  AblationReport rep = ablate_components(component_scale_config(), kSeeds);
  const double base = rep.rows[0].mean, pi = rep.rows[1].mean, ro = rep.rows[2].mean,
               rop = rep.rows[3].mean;
  const bool ok = pi - base >= 0.01 && ro - pi >= 0.0 && rop - ro >= 0.0;
  report(5, ok, "components: +PI >= 1 point, +RO and +RO+ non-negative (4 seeds)",
         "base " + fmt(base) + " -> PI " + fmt(pi) + " -> RO " + fmt(ro) + " -> RO+ " + fmt(rop));
}

void criterion_table2() {
  AblationReport rep = ablate_initializer(component_scale_config(), kSeeds);
  const double none = rep.rows[0].mean, uni = rep.rows[1].mean, gau = rep.rows[2].mean,
               buf = rep.rows[3].mean;
  const bool ok = buf >= none && buf >= uni && buf >= gau && buf - none >= 0.01;
  report(6, ok, "buffer initializer beats none/uniform/gaussian (4 seeds)",
         "none " + fmt(none) + " uniform " + fmt(uni) + " gaussian " + fmt(gau) + " buffer " +
             fmt(buf));
}

void criterion_table5() {
  AblationReport rep = ablate_latent_update(four_stage_config(), kSeeds);
  const double off = rep.rows[0].mean, on = rep.rows[1].mean;
  report(7, on >= off, "latent update helps on DN+SN+GM+CS (4 seeds)",
         "w/o LU " + fmt(off) + " vs w/ LU " + fmt(on));
}

// ------------------------------------------------------------ criterion 8

void criterion_sequential(Trainer& t) {
  // parity is measured on an ordered stream with smoothly drifting imaging
  // conditions; carried parameters are only ever one frame stale there
  std::vector<Sample> stream = generate_sequence(t.config().synth, 777, 200);
  EvalResult twice = t.evaluate(stream, EvalMode::Twice);
  EvalResult seq = t.evaluate(stream, EvalMode::Sequential);
  const double gap = std::fabs(twice.accuracy - seq.accuracy);

  // constant scene: the same frame repeated; parameters must settle
  std::vector<Sample> constant(12, t.test_set().front());
  EvalResult run = t.evaluate(constant, EvalMode::Sequential);
  int settled_at = -1;
  for (size_t f = 1; f < run.param_log.size(); ++f) {
    double delta = 0.0;
    for (size_t i = 0; i < run.param_log[f].size(); ++i)
      delta = std::max(delta, std::fabs(run.param_log[f][i] - run.param_log[f - 1][i]));
    if (delta < 1e-3) {
      settled_at = static_cast<int>(f);
      break;
    }
  }
  const bool ok = gap <= 0.02 && settled_at >= 0 && settled_at <= 10;
  report(8, ok, "sequential parity with twice-input; fixed point within 10 frames",
         "acc gap " + fmt(gap) + ", settled at frame " +
             (settled_at < 0 ? std::string("never") : std::to_string(settled_at)));
}

// ------------------------------------------------------------ criterion 9

void criterion_flops() {
  RunConfig cfg = default_run_config();
  Controller ctrl(cfg.controller, cfg.pipeline, cfg.net.c2);
  const int64_t head = flop_count(ctrl.head_flops());
  const bool ok = head >= 10000 && head <= 100000;
  report(9, ok, "controller overhead per ISP function within [1e4, 1e5] FLOPs",
         std::to_string(head) + " FLOPs at default widths");
}

// ------------------------------------------------------------ criterion 10

void criterion_determinism() {
  RunConfig cfg = default_run_config();
  cfg.trainer.train_images = 48;
  cfg.trainer.test_images = 24;
  cfg.trainer.epochs_phase1 = 2;
  cfg.trainer.epochs_phase2 = 1;
  cfg.trainer.batch_size = 8;
  cfg.trainer.warmup_steps = 4;
  cfg.synth.height = 16;
  cfg.synth.width = 16;
  cfg.controller.latent_width = 16;
  cfg.controller.sfb_channels = 4;
  cfg.controller.sfb_fc_width = 16;
  cfg.controller.update_hidden = 8;
  cfg.net = {4, 6, 6};

  auto run = [&](const std::string& path, std::string& metrics) {
    Trainer t(cfg);
    std::ostringstream ms;
    t.fit(&ms);
    metrics = ms.str();
    save_checkpoint(path, t);
  };
  std::string m1, m2;
  run("/tmp/disp_acc_a.dspc", m1);
  run("/tmp/disp_acc_b.dspc", m2);

  auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const std::string a = slurp("/tmp/disp_acc_a.dspc"), b = slurp("/tmp/disp_acc_b.dspc");
  std::remove("/tmp/disp_acc_a.dspc");
  std::remove("/tmp/disp_acc_b.dspc");
  const bool ok = !a.empty() && a == b && m1 == m2;
  report(10, ok, "same-seed training is byte-deterministic",
         std::to_string(a.size()) + "-byte checkpoints " + (a == b ? "identical" : "differ") +
             ", metric logs " + (m1 == m2 ? "identical" : "differ"));
}

}  // namespace

int main() {
  std::printf("acceptance suite\n");
  criterion_gradcheck();
  criterion_identities();
  criterion_residual_decomposition();
  criterion_table3();
  criterion_table1();
  criterion_table2();
  criterion_table5();
  {
    RunConfig cfg = desk_scale_config();
    cfg.controller.mode = ControlMode::ResidualLearnable;
    cfg.trainer.init_strategy = InitStrategy::Buffer;
    cfg.trainer.epochs_phase1 = 16;  // match the table-3 dynamic arm
    cfg.trainer.epochs_phase2 = 8;
    Trainer t(cfg);
    t.fit(nullptr);
    criterion_sequential(t);
  }
  criterion_flops();
  criterion_determinism();
  std::printf("%d/10 criteria passed\n", 10 - failures);
  return failures == 0 ? 0 : 1;
}
