#pragma once

#include <string>
#include <vector>

#include "milora/backbone.hpp"
#include "milora/graph.hpp"

namespace milora {

// Sequence pooling used to turn the pre-layer hidden states of a prompt
// into a single routing vector.
enum class PoolerKind { kLastToken, kMean, kMax, kSelfAttention };

// Binary gates every selected expert at 1; Weighted renormalizes the
// selected probabilities so they sum to 1 (and therefore carries gradient
// from the task loss into the router weights).
enum class GatingMode { kBinary, kWeighted };

// Router pre-softmax activation: the learnable rational function, or a fixed
// nonlinearity used by ablation variants.
enum class RouterActivation { kRational, kGelu, kRelu };

// Learnable rational function: numerator of degree m over a denominator
// 1 + |polynomial of degree n|, applied elementwise.  Coefficients belong to
// the kArch group (updated on the validation split).
struct RationalActivation {
  Parameter num_coef;  // 1 x (m+1), constant term first
  Parameter den_coef;  // 1 x n, first-order term first
  int order_m() const { return num_coef.value.cols() - 1; }
  int order_n() const { return den_coef.value.cols(); }
};

RationalActivation make_rational(int m, int n, const std::string& name_prefix);
// Coefficients of the identity function x: a = (0, 1, 0, ...), b = 0.
RationalActivation make_identity_rational(int m, int n, const std::string& name_prefix);

// Damped least-squares fit of the rational function to the exact GeLU on a
// uniform grid over [-3, 3] with step 0.01.  Deterministic: no randomness is
// involved, so refitting always reproduces the same coefficients.
struct GeluFitResult {
  RationalActivation activation;
  double max_abs_residual;  // max |rational(x) - gelu(x)| over the fit grid
  int iterations;
};
GeluFitResult fit_gelu_rational(int m, int n, const std::string& name_prefix,
                                DenomMode mode = DenomMode::kAbsOfSum);

Tensor rational_eval(const RationalActivation& act, const Tensor& x, DenomMode mode);

// One layer's routing outcome: which experts run, with what gate weights,
// and the full probability vector they were drawn from.
struct LayerRoute {
  std::vector<int> experts;   // module indices, ascending
  std::vector<double> gates;  // aligned with experts
  Tensor probs;               // 1 x kNumModules
};

struct RoutingDecision {
  std::vector<LayerRoute> layers;
  bool complete(int n_layers) const;
  uint64_t fingerprint() const;  // order-sensitive hash of selections+gates
};

// A per-layer router: pools hidden states, applies its activation, and maps
// the pooled vector to expert probabilities through one linear layer.
struct LoraRouter {
  int layer_index = 0;
  Parameter weight;               // d_model x kNumModules
  RouterActivation activation = RouterActivation::kRational;
  RationalActivation rational;    // used when activation == kRational
  PoolerKind pooler = PoolerKind::kSelfAttention;
  Parameter attn_query;           // d_model x 1 when pooler == kSelfAttention

  std::vector<Parameter*> params();
  int64_t param_count() const;
};

struct RouterSettings {
  int k = 3;
  GatingMode gating = GatingMode::kWeighted;
  PoolerKind pooler = PoolerKind::kSelfAttention;
  DenomMode denom = DenomMode::kAbsOfSum;
  int rational_m = 6;
  int rational_n = 5;
  void validate() const;
};

LoraRouter init_router(const BackboneConfig& cfg, const RouterSettings& s, int layer,
                       RouterActivation activation, uint64_t seed);

// ---- value path (inference) ----
Tensor pool_states(const Tensor& states, PoolerKind kind, const Parameter* attn_query);
Tensor router_probs(const LoraRouter& r, const Tensor& pooled, DenomMode denom);
LayerRoute route(const LoraRouter& r, const Tensor& pooled, int k, GatingMode gating,
                 DenomMode denom);

// Largest-k probability indices in ascending index order; ties between equal
// probabilities go to the lower index.
std::vector<int> topk_indices(const Tensor& probs, int k);
std::vector<double> make_gates(const Tensor& probs, const std::vector<int>& experts,
                               GatingMode gating);

// ---- graph path (training) ----
Value pool_states_g(Graph& g, Value states, PoolerKind kind, Parameter* attn_query);
struct RouteG {
  Value probs;       // 1 x kNumModules, differentiable
  Value gates;       // 1 x k; differentiable in Weighted mode
  LayerRoute fixed;  // plain-value copy of the decision
};
RouteG route_g(Graph& g, LoraRouter& r, Value pooled, int k, GatingMode gating,
               DenomMode denom);

// ---- load-balancing statistics ----
// f: fraction of prompts whose argmax probability lands on each module
// (hard assignment, not differentiable); mean_prob: batch mean of the
// probability vectors.
struct LoadStats {
  Tensor hard_frac;  // 1 x kNumModules
  Tensor mean_prob;  // 1 x kNumModules
};
LoadStats load_balance_stats(const std::vector<Tensor>& batch_probs);
Tensor hard_fractions(const std::vector<Tensor>& batch_probs);

}  // namespace milora
