#pragma once

#include <string>
#include <vector>

#include "milora/generate.hpp"
#include "milora/model.hpp"
#include "milora/train.hpp"

namespace milora {

// Shortest decimal that parses back to exactly the same double; every table
// formats numbers through this so identical runs emit identical bytes.
std::string format_double(double v);

// step,train_loss,dev_ppl,lb_loss,hist_hash — one row per evaluation.
std::string train_log_csv(const std::vector<TrainLogRow>& log);

// mode,k,gating,tokens,router_evals,adapter_macs,activated_params,wall_tps
std::string bench_csv(const std::vector<BenchRow>& rows);

// Human-readable companion to the bench table: per-mode router-cost ratios
// plus the per-module multiplicity note (the baseline re-routes one
// layer-shaped router per layer per step; a per-module variant would cost 7x
// that, and the note spells the multiplied figures out).
std::string bench_summary(const std::vector<BenchRow>& rows);

// Top-k selection frequency per layer and module over every prompt in the
// dataset (prompt region only, as generation-time prefill would route).
// Returns n_layers x kNumModules; each layer row sums to k.  Requires a
// routed model.
Tensor expert_selection_frequency(const Model& m, const std::vector<EncodedSeq>& data);

// layer,module,frequency — kNumModules rows per layer.
std::string distribution_csv(const Tensor& freq);

// Writes text to a file, creating parent directories; throws IoError.
void write_text_file(const std::string& path, const std::string& text);

}  // namespace milora
