#pragma once

#include <string>
#include <vector>

#include "milora/config.hpp"

namespace milora {

// One configuration to train and evaluate, produced by expanding a preset.
struct AblationCell {
  std::string label;
  RunConfig config;  // seed is stamped per repetition at run time
};

// Expands a preset name over the base config:
//   variants     — routed default vs mean pooler, last-token pooler, fixed
//                  GeLU activation, and the two depth-split fixed schedules
//   k-sweep      — k = 1..7, plus k=7 binary gating and the always-on
//                  (plain-LoRA) control
//   lambda-sweep — balance weight in {0, 1e-3, 1e-2, 1e-1, 1}; the zero row
//                  still logs the balance value, it just carries no gradient
//   rank-sweep   — adapter rank in {2, 4, 8, 16, 32}
// Unknown preset -> ConfigError.
std::vector<AblationCell> ablation_cells(const std::string& preset, const RunConfig& base);

// Medians over the per-seed repetitions of one cell (component-wise).
struct AblationResult {
  std::string label;
  double dev_ppl = 0.0;
  double dev_acc = 0.0;
  double lb_loss = 0.0;
  double max_expert_freq = 0.0;
};

// Trains every (cell, repetition) pair — each fully isolated with its own
// derived seed — and merges medians in cell order.  Repetitions may run on
// worker threads; the result is identical for any thread count.
std::vector<AblationResult> run_ablation(const std::string& preset, const RunConfig& base,
                                         int seeds = 5, int threads = 1);

// cell,dev_ppl,dev_acc,lb_loss,max_expert_freq
std::string ablation_csv(const std::vector<AblationResult>& rows);

}  // namespace milora
