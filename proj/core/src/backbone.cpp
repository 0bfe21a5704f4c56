#include "milora/backbone.hpp"

#include <cmath>

#include "milora/errors.hpp"

namespace milora {

const char* module_name(ModuleId m) {
  switch (m) {
    case ModuleId::kQuery: return "q";
    case ModuleId::kKey: return "k";
    case ModuleId::kValue: return "v";
    case ModuleId::kOutput: return "o";
    case ModuleId::kGate: return "gate";
    case ModuleId::kUp: return "up";
    case ModuleId::kDown: return "down";
  }
  return "?";
}

ModuleId module_from_index(int i) {
  if (i < 0 || i >= kNumModules) throw ContractError("module_from_index: out of range");
  return static_cast<ModuleId>(i);
}

void BackboneConfig::validate() const {
  if (vocab_size < 2 || vocab_size > 512)
    throw ConfigError("backbone: vocab_size must be in [2, 512]");
  if (d_model <= 0 || n_layers <= 0 || n_heads <= 0 || d_ffn <= 0 || max_seq_len <= 0)
    throw ConfigError("backbone: dimensions must be positive");
  if (d_model % n_heads != 0)
    throw ConfigError("backbone: d_model must be divisible by n_heads");
  if ((d_model / n_heads) % 2 != 0)
    throw ConfigError("backbone: head dim must be even for rotary encoding");
}

std::pair<int, int> module_dims(const BackboneConfig& cfg, ModuleId m) {
  switch (m) {
    case ModuleId::kQuery:
    case ModuleId::kKey:
    case ModuleId::kValue:
    case ModuleId::kOutput:
      return {cfg.d_model, cfg.d_model};
    case ModuleId::kGate:
    case ModuleId::kUp:
      return {cfg.d_model, cfg.d_ffn};
    case ModuleId::kDown:
      return {cfg.d_ffn, cfg.d_model};
  }
  throw ContractError("module_dims: bad module id");
}

std::vector<Parameter*> BackboneWeights::params() {
  std::vector<Parameter*> out;
  out.push_back(&embedding);
  for (LayerWeights& lw : layers) {
    for (Parameter& p : lw.linear) out.push_back(&p);
    out.push_back(&lw.attn_norm);
    out.push_back(&lw.ffn_norm);
  }
  out.push_back(&final_norm);
  out.push_back(&lm_head);
  return out;
}

void BackboneWeights::set_trainable(bool trainable) {
  for (Parameter* p : params()) p->trainable = trainable;
}

BackboneWeights init_backbone(const BackboneConfig& cfg, uint64_t seed) {
  cfg.validate();
  BackboneWeights w;
  // Every tensor draws from its own named stream, so adding or removing
  // unrelated parameters elsewhere never shifts this initialization.
  auto draw = [&](const std::string& name, int rows, int cols, double stddev) {
    RngStream rng(seed, name);
    return Parameter(Tensor::randn(rng, rows, cols, stddev), ParamGroup::kTask, name,
                     /*trainable_now=*/false);
  };
  const double wstd = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
  w.embedding = draw("backbone.embedding", cfg.vocab_size, cfg.d_model, 1.0);
  w.layers.resize(cfg.n_layers);
  for (int l = 0; l < cfg.n_layers; ++l) {
    LayerWeights& lw = w.layers[l];
    const std::string prefix = "backbone.layer" + std::to_string(l) + ".";
    for (int mi = 0; mi < kNumModules; ++mi) {
      const ModuleId m = module_from_index(mi);
      const auto [din, dout] = module_dims(cfg, m);
      const double std_in = 1.0 / std::sqrt(static_cast<double>(din));
      lw.linear[mi] = draw(prefix + module_name(m), din, dout, std_in);
    }
    lw.attn_norm = Parameter(Tensor::full(1, cfg.d_model, 1.0), ParamGroup::kTask,
                             prefix + "attn_norm", false);
    lw.ffn_norm = Parameter(Tensor::full(1, cfg.d_model, 1.0), ParamGroup::kTask,
                            prefix + "ffn_norm", false);
  }
  w.final_norm = Parameter(Tensor::full(1, cfg.d_model, 1.0), ParamGroup::kTask,
                           "backbone.final_norm", false);
  w.lm_head = draw("backbone.lm_head", cfg.d_model, cfg.vocab_size, wstd);
  return w;
}

}  // namespace milora
