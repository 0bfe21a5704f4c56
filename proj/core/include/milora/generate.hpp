#pragma once

#include <cstdint>
#include <vector>

#include "milora/model.hpp"
#include "milora/train.hpp"

namespace milora {

// kPromptAware routes every layer once during prefill and reuses that
// decision for all decode steps and beams.  kPerTokenBaseline re-routes
// every layer at every generated token from the current position's states —
// the costly behaviour the prompt-aware scheme exists to avoid.
enum class RouteMode { kPromptAware, kPerTokenBaseline };

struct GenerationConfig {
  int max_new_tokens = 32;  // 0: prefill only, empty continuation
  int beam_size = 3;
  bool greedy = false;  // force the greedy path regardless of beam_size
  int eos_id = -1;      // < 0: run to max_new_tokens
  RouteMode route_mode = RouteMode::kPromptAware;

  void validate() const;  // throws ConfigError
};

struct GenerationResult {
  std::vector<int> tokens;  // generated continuation (EOS included if emitted)
  double mean_logprob = 0.0;  // length-normalized sequence score
  // Routing decision in effect when each generated token was produced.  For
  // prompt-aware routing every entry equals the prompt decision; the
  // baseline may change per step.
  std::vector<uint64_t> step_fingerprints;
  RoutingDecision prompt_decision;  // decision from prefill (when routed)
  OpCounters counters;
};

// Greedy (beam_size 1 takes the dedicated argmax path) or beam-search
// generation.  Beam candidates are ranked by cumulative log-probability;
// the returned winner maximizes mean log-probability including the final
// token.  Ties break toward the lower token id, then the earlier beam.
// step_fingerprints holds one entry per generation step performed (for
// greedy that is one per returned token).
GenerationResult generate(const Model& m, const std::vector<int>& prompt,
                          const GenerationConfig& cfg);

// The two paths generate() dispatches between, exposed separately so their
// equivalence at beam width 1 stays checkable.  generate_greedy ignores
// cfg.beam_size; generate_beam honours it, width 1 included.
GenerationResult generate_greedy(const Model& m, const std::vector<int>& prompt,
                                 const GenerationConfig& cfg);
GenerationResult generate_beam(const Model& m, const std::vector<int>& prompt,
                               const GenerationConfig& cfg);

// One row of the efficiency comparison.
struct BenchRow {
  std::string mode;  // "prompt_aware" or "per_token"
  int k = 0;
  std::string gating;
  int64_t tokens = 0;
  uint64_t router_evals = 0;
  uint64_t adapter_macs = 0;
  int64_t activated_params = 0;
  double wall_tps = 0.0;
};

}  // namespace milora
