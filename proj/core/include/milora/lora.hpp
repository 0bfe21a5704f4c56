#pragma once

#include <array>
#include <string>
#include <vector>

#include "milora/backbone.hpp"
#include "milora/graph.hpp"
#include "milora/router.hpp"

namespace milora {

// One low-rank adapter pair attached to a single base linear module.  The
// adapted forward is x*W + gate * (x*a)*b; `a` is Gaussian with variance
// 1/rank, `b` starts at zero so a fresh adapter is an exact no-op.
struct LoraExpert {
  ModuleId module = ModuleId::kQuery;
  Parameter a;  // d_in x rank
  Parameter b;  // rank x d_out
  int rank = 0;

  int64_t param_count() const { return a.value.size() + b.value.size(); }
};

// The seven experts of one layer, indexed by ModuleId.
struct LayerExpertSet {
  std::array<LoraExpert, kNumModules> experts;
};

LoraExpert init_expert(ModuleId m, int d_in, int d_out, int rank, uint64_t seed,
                       const std::string& name_prefix);
LayerExpertSet init_layer_experts(const BackboneConfig& cfg, int layer, int rank,
                                  uint64_t seed);

// ---- value path ----
// y = x*w [+ bias] + gate*(x*a)*b.  A zero gate short-circuits the low-rank
// path entirely.  When mac_counter is given it accumulates the low-rank
// multiply-accumulate count rows*rank*(d_in+d_out) for a non-zero gate.
Tensor lora_forward(const Tensor& x, const Tensor& w, const Tensor* bias,
                    const LoraExpert* expert, double gate,
                    uint64_t* mac_counter = nullptr);

// ---- graph path ----
Value lora_forward_g(Graph& g, Value x, Parameter& w, Parameter* bias,
                     LoraExpert* expert, Value gate);         // differentiable gate (1x1)
Value lora_forward_g(Graph& g, Value x, Parameter& w, Parameter* bias,
                     LoraExpert* expert, double gate);        // constant gate

// Number of parameters engaged by a routing decision: the selected experts'
// low-rank factors plus every router's own parameters (routers always run).
int64_t activated_param_count(const RoutingDecision& decision,
                              const std::vector<LayerExpertSet>& experts,
                              const std::vector<LoraRouter>& routers);

}  // namespace milora
