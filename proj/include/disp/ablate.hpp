#pragma once
#include <ostream>

#include "disp/trainer.hpp"

namespace disp {

struct AblationRow {
  std::string label;
  std::vector<double> seed_accuracy;
  double mean = 0.0;
};

struct AblationReport {
  std::string title;
  std::vector<AblationRow> rows;
};

// Trains one configuration per seed and reports mean test accuracy.
AblationRow run_dynamic_row(const std::string& label, RunConfig cfg,
                            const std::vector<uint64_t>& seeds);
AblationRow run_static_row(const std::string& label, RunConfig cfg,
                           const std::vector<uint64_t>& seeds);

// Controller components added one by one: baseline, +PI, +PI+RO, +PI+RO+.
AblationReport ablate_components(const RunConfig& base, const std::vector<uint64_t>& seeds);
// Parameter-initializer strategies: none / uniform / gaussian / buffer.
AblationReport ablate_initializer(const RunConfig& base, const std::vector<uint64_t>& seeds);
// Grid-search gamma vs differentiable static tuning vs dynamic control.
AblationReport ablate_static_vs_dynamic(const RunConfig& base, const std::vector<uint64_t>& seeds,
                                        const std::vector<double>& gamma_grid);
// Latent update on/off on the four-stage pipeline.
AblationReport ablate_latent_update(const RunConfig& base, const std::vector<uint64_t>& seeds);

void print_report(const AblationReport& report, std::ostream& os);

// Shared configuration presets
RunConfig desk_scale_config();             // GM-only, sized for quick CPU runs
RunConfig component_scale_config();        // variant tuned for controller ablations
RunConfig four_stage_config();             // DN+SN+GM+CS variant of the same
StageSpec make_stage(IspKind kind);

}  // namespace disp
