#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "milora/tensor.hpp"

namespace milora {

// The seven linear modules of one decoder layer that adapters can attach to:
// the four attention projections plus the three gated-FFN projections.
enum class ModuleId { kQuery = 0, kKey, kValue, kOutput, kGate, kUp, kDown };
inline constexpr int kNumModules = 7;

const char* module_name(ModuleId m);       // "q","k","v","o","gate","up","down"
ModuleId module_from_index(int i);

struct BackboneConfig {
  int vocab_size = 16;
  int d_model = 128;
  int n_layers = 4;
  int n_heads = 4;
  int d_ffn = 344;
  int max_seq_len = 64;
  double rms_eps = 1e-5;
  double rope_base = 10000.0;

  int head_dim() const { return d_model / n_heads; }
  void validate() const;  // throws ConfigError
};

// (input_dim, output_dim) of one module's base weight.
std::pair<int, int> module_dims(const BackboneConfig& cfg, ModuleId m);

struct LayerWeights {
  std::array<Parameter, kNumModules> linear;  // indexed by ModuleId
  Parameter attn_norm;                        // 1 x d_model
  Parameter ffn_norm;                         // 1 x d_model
};

// Decoder-only transformer weights: RMS-normalized pre-norm blocks, rotary
// positions on query/key, gated FFN.  Frozen by default; a brief warm-up
// phase may mark them trainable before adapters are attached.
struct BackboneWeights {
  Parameter embedding;  // vocab x d_model
  std::vector<LayerWeights> layers;
  Parameter final_norm;  // 1 x d_model
  Parameter lm_head;     // d_model x vocab

  std::vector<Parameter*> params();
  void set_trainable(bool trainable);
};

BackboneWeights init_backbone(const BackboneConfig& cfg, uint64_t seed);

// Per-layer attention cache.  Keys are stored after rotary encoding, so a
// cached row never needs revisiting as the sequence grows.
struct KvCache {
  int length = 0;
  std::vector<Tensor> keys;    // per layer: length x d_model
  std::vector<Tensor> values;  // per layer: length x d_model

  static KvCache empty(int n_layers) {
    KvCache c;
    c.keys.resize(n_layers);
    c.values.resize(n_layers);
    return c;
  }
};

}  // namespace milora
