#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "milora/backbone.hpp"
#include "milora/counters.hpp"
#include "milora/graph.hpp"
#include "milora/lora.hpp"
#include "milora/router.hpp"

namespace milora {

// kRouted: experts selected per prompt by the routers.  kAlwaysOn: every
// expert applied with gate 1 and no routers exist (the plain-LoRA control).
enum class AdapterMode { kRouted, kAlwaysOn };

struct AdapterStackConfig {
  int rank = 8;
  RouterSettings router;
  AdapterMode mode = AdapterMode::kRouted;
  // Per-layer router activation; defaults to rational everywhere.  Ablation
  // variants substitute fixed nonlinearities, possibly split by depth.
  std::vector<RouterActivation> layer_activation;
};

struct AdapterStack {
  AdapterStackConfig cfg;
  std::vector<LayerExpertSet> experts;  // one set per layer
  std::vector<LoraRouter> routers;      // empty in kAlwaysOn mode
};

AdapterStack init_adapters(const BackboneConfig& cfg, const AdapterStackConfig& acfg,
                           uint64_t seed);

struct Model {
  BackboneConfig cfg;
  BackboneWeights backbone;
  std::optional<AdapterStack> adapters;

  bool routed() const {
    return adapters.has_value() && adapters->cfg.mode == AdapterMode::kRouted;
  }
  std::vector<Parameter*> all_params();
  std::vector<Parameter*> trainable_params(ParamGroup g);
};

// Synthetic decision selecting every expert with gate 1 in each layer.
RoutingDecision all_on_decision(int n_layers);

// Called once per layer with the hidden states captured immediately before
// that layer (the raw residual stream).  Returns the layer's route; the hook
// owns counter updates for router evaluations.
using RoutingHook = std::function<LayerRoute(int layer, const Tensor& pre_layer)>;

struct PrefillResult {
  Tensor logits;                  // n x vocab, every position
  KvCache cache;
  std::vector<Tensor> pre_layer;  // per layer: n x d_model, captured pre-norm
  RoutingDecision decision;       // populated when a hook routed the layers
};

// Full-sequence forward over a prompt.  With a hook, each layer is routed
// from its own freshly captured pre-layer states and its adapters apply
// during this same pass; without one, adapters stay inactive (kAlwaysOn
// models always apply every expert).
PrefillResult prefill(const Model& m, const std::vector<int>& tokens,
                      const RoutingHook* hook = nullptr, OpCounters* counters = nullptr);

// One incremental position against the cache.  Exactly one of decision/hook
// drives adapters for a routed model: a reused per-prompt decision, or a
// per-step hook that re-routes every layer from the current position's
// pre-layer state.  pre_layer_out (when given) receives each layer's 1 x d
// input state for the processed position.
Tensor decode_step(const Model& m, int token, KvCache& cache,
                   const RoutingDecision* decision, const RoutingHook* hook = nullptr,
                   OpCounters* counters = nullptr,
                   std::vector<Tensor>* pre_layer_out = nullptr);

// ---- training path -------------------------------------------------------

struct GraphForward {
  Value logits;                   // n x vocab
  std::vector<Value> layer_probs; // per layer 1 x kNumModules when routed
  RoutingDecision decision;
};

// Builds the differentiable forward over the whole (teacher-forced)
// sequence.  Routing pools the first route_prompt_len rows of each layer's
// pre-layer states — the prompt region — matching what prefill would see at
// generation time.
GraphForward forward_g(Graph& g, Model& m, const std::vector<int>& tokens,
                       int route_prompt_len);

}  // namespace milora
