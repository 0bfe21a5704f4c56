#include "milora/config.hpp"

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "milora/errors.hpp"

namespace milora {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw ConfigError("config: bad value '" + value + "' for key '" + key + "'");
}

int64_t parse_i64(const std::string& key, const std::string& value) {
  int64_t out = 0;
  const char* first = value.data();
  const char* last = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc{} || ptr != last) bad_value(key, value);
  return out;
}

uint64_t parse_u64(const std::string& key, const std::string& value) {
  uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) bad_value(key, value);
  return out;
}

int parse_int(const std::string& key, const std::string& value) {
  const int64_t v = parse_i64(key, value);
  if (v < INT32_MIN || v > INT32_MAX) bad_value(key, value);
  return static_cast<int>(v);
}

double parse_double(const std::string& key, const std::string& value) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) bad_value(key, value);
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value);
}

std::string fmt_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

// ---- enum <-> string -------------------------------------------------------

template <typename E>
struct EnumName {
  E value;
  const char* name;
};

const EnumName<AdapterMode> kAdapterModes[] = {
    {AdapterMode::kRouted, "routed"}, {AdapterMode::kAlwaysOn, "always_on"}};
const EnumName<GatingMode> kGatings[] = {{GatingMode::kWeighted, "weighted"},
                                         {GatingMode::kBinary, "binary"}};
const EnumName<PoolerKind> kPoolers[] = {{PoolerKind::kLastToken, "last_token"},
                                         {PoolerKind::kMean, "mean"},
                                         {PoolerKind::kMax, "max"},
                                         {PoolerKind::kSelfAttention, "self_attention"}};
const EnumName<DenomMode> kDenoms[] = {{DenomMode::kAbsOfSum, "abs_of_sum"},
                                       {DenomMode::kSumOfAbs, "sum_of_abs"}};
const EnumName<TaskKind> kTasks[] = {{TaskKind::kCopy, "copy"},
                                     {TaskKind::kReverse, "reverse"},
                                     {TaskKind::kModArith, "modarith"},
                                     {TaskKind::kCharLM, "charlm"},
                                     {TaskKind::kMix, "mix"}};
const EnumName<RouteMode> kRouteModes[] = {
    {RouteMode::kPromptAware, "prompt_aware"},
    {RouteMode::kPerTokenBaseline, "per_token"}};

template <typename E, size_t N>
E enum_from(const EnumName<E> (&table)[N], const std::string& key,
            const std::string& value) {
  for (const auto& e : table)
    if (value == e.name) return e.value;
  bad_value(key, value);
}

template <typename E, size_t N>
std::string enum_to(const EnumName<E> (&table)[N], E v) {
  for (const auto& e : table)
    if (v == e.value) return e.name;
  throw ContractError("config: unnamed enum value");
}

// ---- the key table ---------------------------------------------------------

struct KeyEntry {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

// Alphabetical by key; serialization emits in this order.
const std::vector<KeyEntry>& key_table() {
  static const std::vector<KeyEntry> table = {
      {"adapters.enabled",
       [](RunConfig& rc, const std::string& v) {
         rc.adapters_enabled = parse_bool("adapters.enabled", v);
       },
       [](const RunConfig& rc) { return std::string(rc.adapters_enabled ? "true" : "false"); }},
      {"adapters.mode",
       [](RunConfig& rc, const std::string& v) {
         rc.adapters.mode = enum_from(kAdapterModes, "adapters.mode", v);
       },
       [](const RunConfig& rc) { return enum_to(kAdapterModes, rc.adapters.mode); }},
      {"adapters.rank",
       [](RunConfig& rc, const std::string& v) {
         rc.adapters.rank = parse_int("adapters.rank", v);
       },
       [](const RunConfig& rc) { return std::to_string(rc.adapters.rank); }},
      {"backbone.d_ffn",
       [](RunConfig& rc, const std::string& v) {
         rc.backbone.d_ffn = parse_int("backbone.d_ffn", v);
       },
       [](const RunConfig& rc) { return std::to_string(rc.backbone.d_ffn); }},
      {"backbone.d_model",
       [](RunConfig& rc, const std::string& v) {
         rc.backbone.d_model = parse_int("backbone.d_model", v);
       },
       [](const RunConfig& rc) { return std::to_string(rc.backbone.d_model); }},
      {"backbone.max_seq_len",
       [](RunConfig& rc, const std::string& v) {
         rc.backbone.max_seq_len = parse_int("backbone.max_seq_len", v);
       },
       [](const RunConfig& rc) { return std::to_string(rc.backbone.max_seq_len); }},
      {"backbone.n_heads",
       [](RunConfig& rc, const std::string& v) {
         rc.backbone.n_heads = parse_int("backbone.n_heads", v);
       },
       [](const RunConfig& rc) { return std::to_string(rc.backbone.n_heads); }},
      {"backbone.n_layers",
       [](RunConfig& rc, const std::string& v) {
         rc.backbone.n_layers = parse_int("backbone.n_layers", v);
       },
       [](const RunConfig& rc) { return std::to_string(rc.backbone.n_layers); }},
      {"backbone.pretrain_lr",
       [](RunConfig& rc, const std::string& v) {
         rc.pretrain_lr = parse_double("backbone.pretrain_lr", v);
       },
       [](const RunConfig& rc) { return fmt_double(rc.pretrain_lr); }},
      {"backbone.pretrain_steps",
       [](RunConfig& rc, const std::string& v) {
         rc.pretrain_steps = parse_int("backbone.pretrain_steps", v);
       },
       [](const RunConfig& rc) { return std::to_string(rc.pretrain_steps); }},
      {"backbone.rms_eps",
       [](RunConfig& rc, const std::string& v) {
         rc.backbone.rms_eps = parse_double("backbone.rms_eps", v);
       },
       [](const RunConfig& rc) { return fmt_double(rc.backbone.rms_eps); }},
      {"backbone.rope_base",
       [](RunConfig& rc, const std::string& v) {
         rc.backbone.rope_base = parse_double("backbone.rope_base", v);
       },
       [](const RunConfig& rc) { return fmt_double(rc.backbone.rope_base); }},
      {"backbone.vocab_size",
       [](RunConfig& rc, const std::string& v) {
         rc.backbone.vocab_size = parse_int("backbone.vocab_size", v);
       },
       [](const RunConfig& rc) { return std::to_string(rc.backbone.vocab_size); }},
      {"generate.beam_size",
       [](RunConfig& rc, const std::string& v) {
         rc.gen.beam_size = parse_int("generate.beam_size", v);
       },
       [](const RunConfig& rc) { return std::to_string(rc.gen.beam_size); }},
      {"generate.eos_id",
       [](RunConfig& rc, const std::string& v) {
         rc.gen.eos_id = parse_int("generate.eos_id", v);
       },
       [](const RunConfig& rc) { return std::to_string(rc.gen.eos_id); }},
      {"generate.greedy",
       [](RunConfig& rc, const std::string& v) {
         rc.gen.greedy = parse_bool("generate.greedy", v);
       },
       [](const RunConfig& rc) { return std::string(rc.gen.greedy ? "true" : "false"); }},
      {"generate.max_new_tokens",
       [](RunConfig& rc, const std::string& v) {
         rc.gen.max_new_tokens = parse_int("generate.max_new_tokens", v);
       },
       [](const RunConfig& rc) { return std::to_string(rc.gen.max_new_tokens); }},
      {"generate.mode",
       [](RunConfig& rc, const std::string& v) {
         rc.gen.route_mode = enum_from(kRouteModes, "generate.mode", v);
       },
       [](const RunConfig& rc) { return enum_to(kRouteModes, rc.gen.route_mode); }},
      {"router.activation",
       [](RunConfig& rc, const std::string& v) { rc.router_activation = v; },
       [](const RunConfig& rc) { return rc.router_activation; }},
      {"router.denom",
       [](RunConfig& rc, const std::string& v) {
         rc.adapters.router.denom = enum_from(kDenoms, "router.denom", v);
       },
       [](const RunConfig& rc) { return enum_to(kDenoms, rc.adapters.router.denom); }},
      {"router.gating",
       [](RunConfig& rc, const std::string& v) {
         rc.adapters.router.gating = enum_from(kGatings, "router.gating", v);
       },
       [](const RunConfig& rc) { return enum_to(kGatings, rc.adapters.router.gating); }},
      {"router.k",
       [](RunConfig& rc, const std::string& v) {
         rc.adapters.router.k = parse_int("router.k", v);
       },
       [](const RunConfig& rc) { return std::to_string(rc.adapters.router.k); }},
      {"router.pooler",
       [](RunConfig& rc, const std::string& v) {
         rc.adapters.router.pooler = enum_from(kPoolers, "router.pooler", v);
       },
       [](const RunConfig& rc) { return enum_to(kPoolers, rc.adapters.router.pooler); }},
      {"router.rational_m",
       [](RunConfig& rc, const std::string& v) {
         rc.adapters.router.rational_m = parse_int("router.rational_m", v);
       },
       [](const RunConfig& rc) { return std::to_string(rc.adapters.router.rational_m); }},
      {"router.rational_n",
       [](RunConfig& rc, const std::string& v) {
         rc.adapters.router.rational_n = parse_int("router.rational_n", v);
       },
       [](const RunConfig& rc) { return std::to_string(rc.adapters.router.rational_n); }},
      {"run.out_dir",
       [](RunConfig& rc, const std::string& v) { rc.out_dir = v; },
       [](const RunConfig& rc) { return rc.out_dir; }},
      {"run.seed",
       [](RunConfig& rc, const std::string& v) { rc.seed = parse_u64("run.seed", v); },
       [](const RunConfig& rc) { return std::to_string(rc.seed); }},
      {"task.corpus",
       [](RunConfig& rc, const std::string& v) { rc.task.corpus_path = v; },
       [](const RunConfig& rc) { return rc.task.corpus_path; }},
      {"task.examples",
       [](RunConfig& rc, const std::string& v) {
         rc.task_examples = parse_int("task.examples", v);
       },
       [](const RunConfig& rc) { return std::to_string(rc.task_examples); }},
      {"task.kind",
       [](RunConfig& rc, const std::string& v) {
         rc.task.kind = enum_from(kTasks, "task.kind", v);
       },
       [](const RunConfig& rc) { return enum_to(kTasks, rc.task.kind); }},
      {"task.mix",
       [](RunConfig& rc, const std::string& v) { rc.task_mix = v; },
       [](const RunConfig& rc) { return rc.task_mix; }},
      {"task.modulus",
       [](RunConfig& rc, const std::string& v) {
         rc.task.modulus = parse_int("task.modulus", v);
       },
       [](const RunConfig& rc) { return std::to_string(rc.task.modulus); }},
      {"task.payload_len",
       [](RunConfig& rc, const std::string& v) {
         rc.task.payload_len = parse_int("task.payload_len", v);
       },
       [](const RunConfig& rc) { return std::to_string(rc.task.payload_len); }},
      {"task.window",
       [](RunConfig& rc, const std::string& v) {
         rc.task.window = parse_int("task.window", v);
       },
       [](const RunConfig& rc) { return std::to_string(rc.task.window); }},
      {"train.batch_size",
       [](RunConfig& rc, const std::string& v) {
         rc.train.batch_size = parse_int("train.batch_size", v);
       },
       [](const RunConfig& rc) { return std::to_string(rc.train.batch_size); }},
      {"train.eval_every",
       [](RunConfig& rc, const std::string& v) {
         rc.train.eval_every = parse_int("train.eval_every", v);
       },
       [](const RunConfig& rc) { return std::to_string(rc.train.eval_every); }},
      {"train.lb_in_arch_step",
       [](RunConfig& rc, const std::string& v) {
         rc.train.lb_in_arch_step = parse_bool("train.lb_in_arch_step", v);
       },
       [](const RunConfig& rc) {
         return std::string(rc.train.lb_in_arch_step ? "true" : "false");
       }},
      {"train.lb_weight",
       [](RunConfig& rc, const std::string& v) {
         rc.train.lb_weight = parse_double("train.lb_weight", v);
       },
       [](const RunConfig& rc) { return fmt_double(rc.train.lb_weight); }},
      {"train.lr_omega",
       [](RunConfig& rc, const std::string& v) {
         rc.train.lr_omega = parse_double("train.lr_omega", v);
       },
       [](const RunConfig& rc) { return fmt_double(rc.train.lr_omega); }},
      {"train.lr_theta",
       [](RunConfig& rc, const std::string& v) {
         rc.train.lr_theta = parse_double("train.lr_theta", v);
       },
       [](const RunConfig& rc) { return fmt_double(rc.train.lr_theta); }},
      {"train.max_epochs",
       [](RunConfig& rc, const std::string& v) {
         rc.train.max_epochs = parse_int("train.max_epochs", v);
       },
       [](const RunConfig& rc) { return std::to_string(rc.train.max_epochs); }},
      {"train.max_steps",
       [](RunConfig& rc, const std::string& v) {
         rc.train.max_steps = parse_i64("train.max_steps", v);
       },
       [](const RunConfig& rc) { return std::to_string(rc.train.max_steps); }},
      {"train.patience",
       [](RunConfig& rc, const std::string& v) {
         rc.train.patience = parse_int("train.patience", v);
       },
       [](const RunConfig& rc) { return std::to_string(rc.train.patience); }},
      {"train.warmup_frac",
       [](RunConfig& rc, const std::string& v) {
         rc.train.warmup_frac = parse_double("train.warmup_frac", v);
       },
       [](const RunConfig& rc) { return fmt_double(rc.train.warmup_frac); }},
  };
  return table;
}

const KeyEntry* find_key(const std::string& key) {
  for (const KeyEntry& e : key_table())
    if (key == e.key) return &e;
  return nullptr;
}

}  // namespace

TaskSpec RunConfig::resolved_task() const {
  TaskSpec t = task;
  t.parts.clear();
  t.weights.clear();
  if (t.kind != TaskKind::kMix) return t;
  if (task_mix.empty())
    throw ConfigError("config: task.kind = mix needs a task.mix recipe");
  std::stringstream ss(task_mix);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    const size_t colon = item.find(':');
    if (colon == std::string::npos)
      throw ConfigError("config: mix entry '" + item + "' is not kind:weight");
    const std::string kind_s = trim(item.substr(0, colon));
    const std::string weight_s = trim(item.substr(colon + 1));
    TaskSpec part = task;  // scalar settings shared across components
    part.kind = enum_from(kTasks, "task.mix", kind_s);
    part.parts.clear();
    part.weights.clear();
    t.parts.push_back(part);
    t.weights.push_back(parse_double("task.mix", weight_s));
  }
  return t;
}

std::vector<RouterActivation> RunConfig::resolved_activations() const {
  const int L = backbone.n_layers;
  std::vector<RouterActivation> acts(static_cast<size_t>(L), RouterActivation::kRational);
  const int half = L / 2;
  if (router_activation == "rational") {
    // default
  } else if (router_activation == "gelu") {
    acts.assign(static_cast<size_t>(L), RouterActivation::kGelu);
  } else if (router_activation == "relu") {
    acts.assign(static_cast<size_t>(L), RouterActivation::kRelu);
  } else if (router_activation == "relu_then_gelu") {
    for (int l = 0; l < L; ++l)
      acts[static_cast<size_t>(l)] =
          l < half ? RouterActivation::kRelu : RouterActivation::kGelu;
  } else if (router_activation == "gelu_then_relu") {
    for (int l = 0; l < L; ++l)
      acts[static_cast<size_t>(l)] =
          l < half ? RouterActivation::kGelu : RouterActivation::kRelu;
  } else {
    throw ConfigError("config: unknown router.activation '" + router_activation + "'");
  }
  return acts;
}

void RunConfig::validate() const {
  backbone.validate();
  train.validate();
  gen.validate();
  if (adapters_enabled) {
    if (adapters.rank < 1) throw ConfigError("config: adapters.rank must be >= 1");
    adapters.router.validate();
    resolved_activations();
  }
  const TaskSpec resolved = resolved_task();
  resolved.validate(backbone.vocab_size);
  if (max_sequence_length(resolved) > backbone.max_seq_len)
    throw ConfigError("config: task sequences of up to " +
                      std::to_string(max_sequence_length(resolved)) +
                      " tokens exceed max_seq_len " +
                      std::to_string(backbone.max_seq_len));
  if (task_examples < 2) throw ConfigError("config: task.examples must be >= 2");
  if (pretrain_steps < 0) throw ConfigError("config: pretrain_steps must be >= 0");
  if (pretrain_steps > 0 && pretrain_lr <= 0.0)
    throw ConfigError("config: pretrain_lr must be positive");
  for (const std::string* s : {&out_dir, &task.corpus_path, &task_mix})
    if (s->find('#') != std::string::npos || s->find('\n') != std::string::npos)
      throw ConfigError("config: string values cannot contain '#' or newlines");
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig rc;
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(line_no) +
                        " is not 'key = value': " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const KeyEntry* entry = find_key(key);
    if (!entry) throw ConfigError("config: unknown key '" + key + "'");
    entry->set(rc, value);
  }
  return rc;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("config: cannot read " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_config_text(text);
}

void apply_override(RunConfig& rc, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("config: override '" + assignment + "' is not key=value");
  const std::string key = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  const KeyEntry* entry = find_key(key);
  if (!entry) throw ConfigError("config: unknown key '" + key + "'");
  entry->set(rc, value);
}

std::string serialize_config(const RunConfig& rc) {
  std::string out;
  for (const KeyEntry& e : key_table()) {
    out += e.key;
    out += " = ";
    out += e.get(rc);
    out += "\n";
  }
  return out;
}

}  // namespace milora
