#include "milora/lora.hpp"

#include <cmath>

#include "milora/errors.hpp"
#include "milora/ops.hpp"

namespace milora {

LoraExpert init_expert(ModuleId m, int d_in, int d_out, int rank, uint64_t seed,
                       const std::string& name_prefix) {
  if (rank < 1) throw ConfigError("lora: rank must be >= 1");
  if (rank > std::min(d_in, d_out) / 2)
    throw ConfigError("lora: rank " + std::to_string(rank) + " exceeds min(" +
                      std::to_string(d_in) + "," + std::to_string(d_out) + ")/2");
  LoraExpert e;
  e.module = m;
  e.rank = rank;
  const double std = 1.0 / std::sqrt(static_cast<double>(rank));  // variance 1/rank
  RngStream rng(seed, name_prefix + ".a");
  e.a = Parameter(Tensor::randn(rng, d_in, rank, std), ParamGroup::kTask, name_prefix + ".a");
  e.b = Parameter(Tensor(rank, d_out), ParamGroup::kTask, name_prefix + ".b");
  return e;
}

LayerExpertSet init_layer_experts(const BackboneConfig& cfg, int layer, int rank,
                                  uint64_t seed) {
  LayerExpertSet set;
  for (int mi = 0; mi < kNumModules; ++mi) {
    const ModuleId m = module_from_index(mi);
    const auto [din, dout] = module_dims(cfg, m);
    const std::string prefix =
        "adapter.layer" + std::to_string(layer) + "." + module_name(m);
    set.experts[mi] = init_expert(m, din, dout, rank, seed, prefix);
  }
  return set;
}

Tensor lora_forward(const Tensor& x, const Tensor& w, const Tensor* bias,
                    const LoraExpert* expert, double gate, uint64_t* mac_counter) {
  Tensor y = matmul(x, w);
  if (bias) {
    if (bias->rows() != 1 || bias->cols() != y.cols())
      throw ShapeError("lora_forward: bias " + bias->shape_str() + " for output " + y.shape_str());
    for (int i = 0; i < y.rows(); ++i)
      for (int j = 0; j < y.cols(); ++j) y.at(i, j) += bias->at(0, j);
  }
  if (expert && gate != 0.0) {
    Tensor low = matmul(matmul(x, expert->a.value), expert->b.value);
    if (gate != 1.0) low.scale_inplace(gate);
    y.add_inplace(low);
    if (mac_counter)
      *mac_counter += static_cast<uint64_t>(x.rows()) * expert->rank *
                      (expert->a.value.rows() + expert->b.value.cols());
  }
  return y;
}

namespace {

Value lora_low_rank_g(Graph& g, Value x, LoraExpert* expert) {
  return g.matmul(g.matmul(x, g.param(expert->a)), g.param(expert->b));
}

}  // namespace

Value lora_forward_g(Graph& g, Value x, Parameter& w, Parameter* bias,
                     LoraExpert* expert, Value gate) {
  Value y = g.matmul(x, g.param(w));
  if (bias) y = g.add_bias(y, g.param(*bias));
  if (expert) y = g.add(y, g.scale_by(lora_low_rank_g(g, x, expert), gate));
  return y;
}

Value lora_forward_g(Graph& g, Value x, Parameter& w, Parameter* bias,
                     LoraExpert* expert, double gate) {
  Value y = g.matmul(x, g.param(w));
  if (bias) y = g.add_bias(y, g.param(*bias));
  if (expert && gate != 0.0) {
    Value low = lora_low_rank_g(g, x, expert);
    if (gate != 1.0) low = g.scale(low, gate);
    y = g.add(y, low);
  }
  return y;
}

int64_t activated_param_count(const RoutingDecision& decision,
                              const std::vector<LayerExpertSet>& experts,
                              const std::vector<LoraRouter>& routers) {
  if (decision.layers.size() != experts.size())
    throw ContractError("activated_param_count: decision does not cover every layer");
  int64_t total = 0;
  for (size_t l = 0; l < decision.layers.size(); ++l)
    for (int e : decision.layers[l].experts)
      total += experts[l].experts[e].param_count();
  for (const LoraRouter& r : routers) total += r.param_count();
  return total;
}

}  // namespace milora
