#pragma once

#include <string>

#include "milora/dataset.hpp"
#include "milora/generate.hpp"
#include "milora/model.hpp"
#include "milora/train.hpp"

namespace milora {

// Complete description of one run.  Serialized as flat `section.key = value`
// lines with '#' comments; the serialization is canonical (fixed key order,
// shortest round-trip numbers), so identical configs produce identical bytes.
// Values cannot contain '#'.
struct RunConfig {
  BackboneConfig backbone;
  int pretrain_steps = 0;     // backbone LM warm-up steps before freezing
  double pretrain_lr = 1e-3;

  bool adapters_enabled = true;
  AdapterStackConfig adapters;
  // Router activation pattern: rational | gelu | relu | relu_then_gelu |
  // gelu_then_relu (the *_then_* forms split layers at the midpoint).
  std::string router_activation = "rational";

  TrainConfig train;

  TaskSpec task;
  // Mix recipe "kind:weight,kind:weight" used when task.kind = mix.
  std::string task_mix;
  int task_examples = 2000;

  GenerationConfig gen;

  std::string out_dir = "out";
  uint64_t seed = 1;

  // Task spec with mix parts resolved from task_mix.
  TaskSpec resolved_task() const;  // throws ConfigError
  // Per-layer activations resolved from router_activation.
  std::vector<RouterActivation> resolved_activations() const;  // throws ConfigError

  void validate() const;  // throws ConfigError
};

// Parse `key = value` lines ('#' starts a comment, blank lines ignored).
// Unknown keys and malformed values throw ConfigError.
RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);  // IoError / ConfigError

// One `key=value` assignment (the CLI's --set flag).
void apply_override(RunConfig& rc, const std::string& assignment);

// Canonical serialization; parse_config_text(serialize_config(rc)) restores
// every field bit-exactly.
std::string serialize_config(const RunConfig& rc);

}  // namespace milora
