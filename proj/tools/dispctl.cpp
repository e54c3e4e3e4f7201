#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "disp/ablate.hpp"
#include "disp/gradcheck.hpp"
#include "disp/io.hpp"

using namespace disp;

namespace {

std::vector<double> parse_range(const std::string& s) {
  double lo = 0, hi = 0;
  int n = 0;
  char c1 = 0, c2 = 0;
  std::istringstream is(s);
  if (!(is >> lo >> c1 >> hi >> c2 >> n) || c1 != ':' || c2 != ':' || n < 1 || hi < lo)
    throw ConfigError("bad --range, expected lo:hi:n");
  std::vector<double> out;
  for (int i = 0; i < n; ++i)
    out.push_back(n == 1 ? lo : lo + (hi - lo) * i / (n - 1));
  return out;
}

int cmd_process(const std::string& config, const std::string& checkpoint, const std::string& mode,
                const std::string& input, const std::string& output) {
  Tensor img = load_image(input, image_format_from_path(input));
  Tensor out;
  if (!checkpoint.empty()) {
    std::unique_ptr<Trainer> t = load_checkpoint(checkpoint);
    const RunConfig& cfg = t->config();
    if (mode == "static") {
      out = apply_pipeline(img, cfg.pipeline, t->controller().static_params(t->params())).output;
    } else {
      std::vector<double> p0 = t->buffer().inference_initial(t->static_param_values());
      GradRecord isp1 = apply_pipeline(img, cfg.pipeline, t->unflatten(p0));
      SurrogateModel::Trace bb = t->surrogate().forward_backbone(t->params(), isp1.output);
      Controller::Trace trace = t->controller().forward(t->params(), bb.feature);
      out = apply_pipeline(img, cfg.pipeline, trace.params).output;
    }
  } else {
    if (mode != "static")
      throw ConfigError("process --mode twice needs --checkpoint");
    RunConfig cfg = load_run_config(config);
    SurrogateModel net(cfg.synth.channels, cfg.synth.num_classes, cfg.net);
    Controller ctrl(cfg.controller, cfg.pipeline, net.feature_channels());
    ParamStore store;
    std::mt19937_64 rng(cfg.trainer.seed);
    net.init_params(store, rng);
    ctrl.init_params(store, rng);
    out = apply_pipeline(img, cfg.pipeline, ctrl.static_params(store)).output;
  }
  save_image(output, out, image_format_from_path(output));
  return 0;
}

int cmd_gradcheck(const std::string& op, uint64_t seed, int instances) {
  GradcheckReport rep = run_gradcheck_suite(seed, instances, op);
  for (const GradcheckEntry& e : rep.entries)
    std::cout << (e.pass() ? "ok  " : "FAIL") << "  " << e.op << "  max rel err "
              << std::scientific << e.max_rel_err << "\n";
  return rep.pass() ? 0 : 2;
}

int cmd_flops(const std::string& config) {
  RunConfig cfg = config.empty() ? default_run_config() : load_run_config(config);
  SurrogateModel net(cfg.synth.channels, cfg.synth.num_classes, cfg.net);
  Controller ctrl(cfg.controller, cfg.pipeline, net.feature_channels());
  const int fh = (cfg.synth.height + 3) / 4, fw = (cfg.synth.width + 3) / 4;
  std::cout << "per-function head (decode + update): " << flop_count(ctrl.head_flops()) << "\n";
  std::cout << "shared feature branch:                " << flop_count(ctrl.sfb_flops(fh, fw))
            << "\n";
  std::cout << "surrogate forward:                    "
            << flop_count(net.flops(cfg.synth.height, cfg.synth.width)) << "\n";
  return 0;
}

int cmd_ablate(int table, int num_seeds) {
  std::vector<uint64_t> seeds;
  for (int i = 1; i <= num_seeds; ++i) seeds.push_back(i);
  AblationReport rep;
  switch (table) {
    case 1: rep = ablate_components(component_scale_config(), seeds); break;
    case 2: rep = ablate_initializer(component_scale_config(), seeds); break;
    case 3:
      rep = ablate_static_vs_dynamic(desk_scale_config(), seeds, {0.5, 1.0, 2.0, 4.0, 8.0});
      break;
    case 5: rep = ablate_latent_update(four_stage_config(), seeds); break;
    default: throw ConfigError("--table must be 1, 2, 3 or 5");
  }
  print_report(rep, std::cout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"differentiable ISP with feedback control"};
  app.require_subcommand(1);

  std::string config, checkpoint, mode = "static", input, output, metrics_path;
  std::string param = "g1", range = "0.5:8:5", op;
  uint64_t seed = 1;
  int instances = 100, table = 1, num_seeds = 4;

  CLI::App* process = app.add_subcommand("process", "run the ISP on an image");
  process->add_option("--config", config);
  process->add_option("--checkpoint", checkpoint);
  process->add_option("--mode", mode)->check(CLI::IsMember({"static", "twice"}));
  process->add_option("--input", input)->required();
  process->add_option("--output", output)->required();

  CLI::App* train = app.add_subcommand("train", "two-frame dynamic training");
  train->add_option("--config", config)->required();
  train->add_option("--checkpoint", checkpoint);
  train->add_option("--metrics", metrics_path);

  CLI::App* tune = app.add_subcommand("tune-static", "differentiable static tuning");
  tune->add_option("--config", config)->required();
  tune->add_option("--checkpoint", checkpoint);
  tune->add_option("--metrics", metrics_path);

  CLI::App* grid = app.add_subcommand("grid-search", "grid search over a simple gamma");
  grid->add_option("--config", config)->required();
  grid->add_option("--param", param);
  grid->add_option("--range", range);

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test set");
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_option("--mode", mode)->check(CLI::IsMember({"twice", "sequential"}));

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  gradcheck->add_option("--op", op);
  gradcheck->add_option("--seed", seed);
  gradcheck->add_option("--instances", instances);

  CLI::App* flops = app.add_subcommand("flops", "cost report for a configuration");
  flops->add_option("--config", config);

  CLI::App* ablate = app.add_subcommand("ablate", "directional reproduction tables");
  ablate->add_option("--table", table)->required();
  ablate->add_option("--seeds", num_seeds);

  try {
    app.parse(argc, argv);

    if (process->parsed()) return cmd_process(config, checkpoint, mode, input, output);

    if (train->parsed() || tune->parsed()) {
      RunConfig cfg = load_run_config(config);
      Trainer t(cfg);
      std::ofstream mf;
      std::ostream* ms = &std::cout;
      if (!metrics_path.empty()) {
        mf.open(metrics_path);
        ms = &mf;
      }
      if (train->parsed()) {
        t.fit(ms);
        std::cout << "test accuracy (twice): " << t.evaluate(t.test_set(), EvalMode::Twice).accuracy
                  << "\n";
      } else {
        t.tune_static(ms);
        std::cout << "test accuracy (static): " << t.evaluate_static(t.test_set()).accuracy
                  << "\n";
      }
      if (!checkpoint.empty()) save_checkpoint(checkpoint, t);
      return 0;
    }

    if (grid->parsed()) {
      if (param != "g1") throw ConfigError("only --param g1 is supported");
      RunConfig cfg = load_run_config(config);
      GridSearchResult r = grid_search_gamma(cfg, parse_range(range));
      for (size_t i = 0; i < r.gammas.size(); ++i)
        std::cout << "gamma " << r.gammas[i] << "  accuracy " << r.scores[i] << "\n";
      std::cout << "best gamma " << r.best_gamma << "  accuracy " << r.best_score << "\n";
      return 0;
    }

    if (eval->parsed()) {
      std::unique_ptr<Trainer> t = load_checkpoint(checkpoint);
      if (mode != "sequential") mode = "twice";
      if (mode == "sequential") {
        // sequential carry needs an ordered stream, not the shuffled test set
        std::vector<Sample> stream =
            generate_sequence(t->config().synth, t->config().trainer.seed + 7, 200);
        std::cout << "sequence accuracy (sequential): "
                  << t->evaluate(stream, EvalMode::Sequential).accuracy << "\n";
      } else {
        std::cout << "test accuracy (twice): "
                  << t->evaluate(t->test_set(), EvalMode::Twice).accuracy << "\n";
      }
      return 0;
    }

    if (gradcheck->parsed()) return cmd_gradcheck(op, seed, instances);
    if (flops->parsed()) return cmd_flops(config);
    if (ablate->parsed()) return cmd_ablate(table, num_seeds);
    return 1;
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
