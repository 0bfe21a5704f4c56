#include "milora/model.hpp"

#include <cmath>

#include "milora/errors.hpp"
#include "milora/ops.hpp"
#include "milora/optim.hpp"

namespace milora {

namespace {

// Gate per module index (0 = expert inactive).
std::array<double, kNumModules> module_gates(const LayerRoute* lr) {
  std::array<double, kNumModules> g{};
  if (lr)
    for (size_t i = 0; i < lr->experts.size(); ++i) g[lr->experts[i]] = lr->gates[i];
  return g;
}

void append_row(Tensor& t, const Tensor& row) {
  if (t.empty()) {
    t = row;
    return;
  }
  Tensor grown(t.rows() + 1, t.cols());
  for (int i = 0; i < t.rows(); ++i)
    for (int j = 0; j < t.cols(); ++j) grown.at(i, j) = t.at(i, j);
  for (int j = 0; j < t.cols(); ++j) grown.at(t.rows(), j) = row.at(0, j);
  t = std::move(grown);
}

Tensor col_block(const Tensor& t, int c0, int c1) {
  Tensor out(t.rows(), c1 - c0);
  for (int i = 0; i < t.rows(); ++i)
    for (int j = c0; j < c1; ++j) out.at(i, j - c0) = t.at(i, j);
  return out;
}

// Always-on adapters engage every expert (there are no routers to count).
int64_t all_expert_params(const AdapterStack& stack) {
  int64_t total = 0;
  for (const LayerExpertSet& set : stack.experts)
    for (const LoraExpert& e : set.experts) total += e.param_count();
  return total;
}

}  // namespace

AdapterStack init_adapters(const BackboneConfig& cfg, const AdapterStackConfig& acfg,
                           uint64_t seed) {
  AdapterStack stack;
  stack.cfg = acfg;
  if (stack.cfg.layer_activation.empty())
    stack.cfg.layer_activation.assign(cfg.n_layers, RouterActivation::kRational);
  if (static_cast<int>(stack.cfg.layer_activation.size()) != cfg.n_layers)
    throw ConfigError("adapters: layer_activation must cover every layer");
  for (int l = 0; l < cfg.n_layers; ++l)
    stack.experts.push_back(init_layer_experts(cfg, l, acfg.rank, seed));
  if (acfg.mode == AdapterMode::kRouted) {
    acfg.router.validate();
    for (int l = 0; l < cfg.n_layers; ++l)
      stack.routers.push_back(
          init_router(cfg, acfg.router, l, stack.cfg.layer_activation[l], seed));
  }
  return stack;
}

std::vector<Parameter*> Model::all_params() {
  std::vector<Parameter*> out = backbone.params();
  if (adapters) {
    for (LayerExpertSet& set : adapters->experts)
      for (LoraExpert& e : set.experts) {
        out.push_back(&e.a);
        out.push_back(&e.b);
      }
    for (LoraRouter& r : adapters->routers)
      for (Parameter* p : r.params()) out.push_back(p);
  }
  return out;
}

std::vector<Parameter*> Model::trainable_params(ParamGroup g) {
  return filter_group(all_params(), g);
}

RoutingDecision all_on_decision(int n_layers) {
  RoutingDecision d;
  d.layers.resize(n_layers);
  for (LayerRoute& lr : d.layers) {
    lr.probs = Tensor::full(1, kNumModules, 1.0 / kNumModules);
    for (int e = 0; e < kNumModules; ++e) {
      lr.experts.push_back(e);
      lr.gates.push_back(1.0);
    }
  }
  return d;
}

namespace {

// Shared layer body for the value path.  x is n x d (n >= 1); attention uses
// the provided cache rows plus the freshly appended current rows.
struct ValueLayerCtx {
  const Model& m;
  KvCache& cache;
  OpCounters* counters;
};

Tensor run_layer_value(ValueLayerCtx& ctx, int l, const Tensor& x, int first_pos,
                       const LayerRoute* lr, bool full_sequence) {
  const BackboneConfig& cfg = ctx.m.cfg;
  const LayerWeights& lw = ctx.m.backbone.layers[l];
  const int hd = cfg.head_dim();
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const auto gates = module_gates(lr);
  uint64_t* macs = ctx.counters ? &ctx.counters->adapter_macs : nullptr;
  const LayerExpertSet* experts = ctx.m.adapters ? &ctx.m.adapters->experts[l] : nullptr;
  auto expert_of = [&](ModuleId mod) -> const LoraExpert* {
    if (!experts) return nullptr;
    const int mi = static_cast<int>(mod);
    return gates[mi] != 0.0 ? &experts->experts[mi] : nullptr;
  };
  auto run_linear = [&](const Tensor& in, ModuleId mod) {
    const int mi = static_cast<int>(mod);
    return lora_forward(in, lw.linear[mi].value, nullptr, expert_of(mod), gates[mi], macs);
  };

  // ---- attention ----
  Tensor xn = rmsnorm_rows(x, lw.attn_norm.value, cfg.rms_eps);
  Tensor q = run_linear(xn, ModuleId::kQuery);
  Tensor k = run_linear(xn, ModuleId::kKey);
  Tensor v = run_linear(xn, ModuleId::kValue);
  rope_inplace(q, cfg.n_heads, first_pos, cfg.rope_base);
  rope_inplace(k, cfg.n_heads, first_pos, cfg.rope_base);
  if (full_sequence) {
    ctx.cache.keys[l] = k;
    ctx.cache.values[l] = v;
  } else {
    append_row(ctx.cache.keys[l], k);
    append_row(ctx.cache.values[l], v);
  }
  const Tensor& keys = ctx.cache.keys[l];
  const Tensor& vals = ctx.cache.values[l];

  Tensor context(x.rows(), cfg.d_model);
  if (full_sequence) {
    const Tensor mask = causal_mask(x.rows());
    for (int h = 0; h < cfg.n_heads; ++h) {
      const Tensor qh = col_block(q, h * hd, (h + 1) * hd);
      const Tensor kh = col_block(keys, h * hd, (h + 1) * hd);
      const Tensor vh = col_block(vals, h * hd, (h + 1) * hd);
      Tensor scores = add(scale(matmul_nt(qh, kh), inv_scale), mask);
      Tensor probs = softmax_rows(scores);
      Tensor ch = matmul(probs, vh);
      for (int i = 0; i < ch.rows(); ++i)
        for (int j = 0; j < hd; ++j) context.at(i, h * hd + j) = ch.at(i, j);
    }
  } else {
    const int total = keys.rows();
    for (int h = 0; h < cfg.n_heads; ++h) {
      std::vector<double> s(total);
      double mx = -1e300;
      for (int j = 0; j < total; ++j) {
        double dot = 0.0;
        for (int c = 0; c < hd; ++c) dot += q.at(0, h * hd + c) * keys.at(j, h * hd + c);
        s[j] = dot * inv_scale;
        mx = std::max(mx, s[j]);
      }
      double sum = 0.0;
      for (int j = 0; j < total; ++j) {
        s[j] = std::exp(s[j] - mx);
        sum += s[j];
      }
      for (int j = 0; j < total; ++j) {
        const double p = s[j] / sum;
        for (int c = 0; c < hd; ++c) context.at(0, h * hd + c) += p * vals.at(j, h * hd + c);
      }
    }
  }
  Tensor attn_out = run_linear(context, ModuleId::kOutput);
  Tensor mid = add(x, attn_out);

  // ---- gated FFN ----
  Tensor xn2 = rmsnorm_rows(mid, lw.ffn_norm.value, cfg.rms_eps);
  Tensor gate_act = silu(run_linear(xn2, ModuleId::kGate));
  Tensor up = run_linear(xn2, ModuleId::kUp);
  Tensor down = run_linear(mul(gate_act, up), ModuleId::kDown);
  return add(mid, down);
}

}  // namespace

PrefillResult prefill(const Model& m, const std::vector<int>& tokens,
                      const RoutingHook* hook, OpCounters* counters) {
  const BackboneConfig& cfg = m.cfg;
  const int n = static_cast<int>(tokens.size());
  if (n < 1) throw ContractError("prefill: empty prompt");
  if (n > cfg.max_seq_len) throw ContractError("prefill: prompt exceeds max_seq_len");
  PrefillResult res;
  res.cache = KvCache::empty(cfg.n_layers);
  res.pre_layer.reserve(cfg.n_layers);

  Tensor x(n, cfg.d_model);
  for (int i = 0; i < n; ++i) {
    if (tokens[i] < 0 || tokens[i] >= cfg.vocab_size)
      throw ContractError("prefill: token id out of range");
    for (int j = 0; j < cfg.d_model; ++j) x.at(i, j) = m.backbone.embedding.value.at(tokens[i], j);
  }

  const bool always_on = m.adapters && m.adapters->cfg.mode == AdapterMode::kAlwaysOn;
  ValueLayerCtx ctx{m, res.cache, counters};
  for (int l = 0; l < cfg.n_layers; ++l) {
    res.pre_layer.push_back(x);
    const LayerRoute* lr = nullptr;
    LayerRoute local;
    if (always_on) {
      local = all_on_decision(1).layers[0];
      lr = &local;
    } else if (m.routed() && hook) {
      local = (*hook)(l, x);
      lr = &local;
    }
    if (lr) res.decision.layers.push_back(*lr);
    x = run_layer_value(ctx, l, x, /*first_pos=*/0, lr, /*full_sequence=*/true);
  }
  res.cache.length = n;

  Tensor xf = rmsnorm_rows(x, m.backbone.final_norm.value, cfg.rms_eps);
  res.logits = matmul(xf, m.backbone.lm_head.value);

  if (counters && m.adapters && !res.decision.layers.empty())
    counters->note_activated(
        activated_param_count(res.decision, m.adapters->experts, m.adapters->routers));
  else if (counters && always_on)
    counters->note_activated(all_expert_params(*m.adapters));
  return res;
}

Tensor decode_step(const Model& m, int token, KvCache& cache,
                   const RoutingDecision* decision, const RoutingHook* hook,
                   OpCounters* counters, std::vector<Tensor>* pre_layer_out) {
  const BackboneConfig& cfg = m.cfg;
  if (static_cast<int>(cache.keys.size()) != cfg.n_layers)
    throw ContractError("decode_step: cache layer count mismatch");
  if (cache.length + 1 > cfg.max_seq_len)
    throw ContractError("decode_step: sequence exceeds max_seq_len");
  if (token < 0 || token >= cfg.vocab_size)
    throw ContractError("decode_step: token id out of range");
  const bool always_on = m.adapters && m.adapters->cfg.mode == AdapterMode::kAlwaysOn;
  if (m.routed() && !decision && !hook)
    throw ContractError("decode_step: routed model needs a decision or hook");
  if (decision && m.routed() && !decision->complete(cfg.n_layers))
    throw ContractError("decode_step: incomplete routing decision");

  Tensor x(1, cfg.d_model);
  for (int j = 0; j < cfg.d_model; ++j) x.at(0, j) = m.backbone.embedding.value.at(token, j);

  RoutingDecision step_decision;  // assembled when a hook re-routes per layer
  ValueLayerCtx ctx{m, cache, counters};
  const int pos = cache.length;
  for (int l = 0; l < cfg.n_layers; ++l) {
    if (pre_layer_out) {
      if (static_cast<int>(pre_layer_out->size()) <= l) pre_layer_out->resize(cfg.n_layers);
      (*pre_layer_out)[l] = x;
    }
    const LayerRoute* lr = nullptr;
    LayerRoute local;
    if (always_on) {
      local = all_on_decision(1).layers[0];
      lr = &local;
    } else if (m.routed() && hook) {
      local = (*hook)(l, x);
      step_decision.layers.push_back(local);
      lr = &step_decision.layers.back();
    } else if (m.routed()) {
      lr = &decision->layers[l];
    }
    x = run_layer_value(ctx, l, x, pos, lr, /*full_sequence=*/false);
  }
  cache.length = pos + 1;
  if (counters) {
    ++counters->decode_steps;
    if (hook && m.routed() && !step_decision.layers.empty())
      counters->note_activated(
          activated_param_count(step_decision, m.adapters->experts, m.adapters->routers));
    else if (always_on)
      counters->note_activated(all_expert_params(*m.adapters));
  }

  Tensor xf = rmsnorm_rows(x, m.backbone.final_norm.value, cfg.rms_eps);
  return matmul(xf, m.backbone.lm_head.value);
}

GraphForward forward_g(Graph& g, Model& m, const std::vector<int>& tokens,
                       int route_prompt_len) {
  const BackboneConfig& cfg = m.cfg;
  const int n = static_cast<int>(tokens.size());
  if (n < 1) throw ContractError("forward_g: empty sequence");
  if (n > cfg.max_seq_len) throw ContractError("forward_g: sequence exceeds max_seq_len");
  if (route_prompt_len < 1 || route_prompt_len > n)
    throw ContractError("forward_g: route_prompt_len out of range");
  const int hd = cfg.head_dim();
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const bool always_on = m.adapters && m.adapters->cfg.mode == AdapterMode::kAlwaysOn;

  GraphForward out;
  Value x = g.embedding(tokens, m.backbone.embedding);
  const Tensor mask = causal_mask(n);

  for (int l = 0; l < cfg.n_layers; ++l) {
    LayerWeights& lw = m.backbone.layers[l];
    LayerExpertSet* experts = m.adapters ? &m.adapters->experts[l] : nullptr;

    // Routing from the raw pre-layer residual stream, prompt region only.
    std::array<bool, kNumModules> active{};
    std::array<double, kNumModules> const_gates{};
    std::array<Value, kNumModules> value_gates;  // set in Weighted mode only
    bool weighted = false;
    if (always_on) {
      active.fill(true);
      const_gates.fill(1.0);
      out.decision.layers.push_back(all_on_decision(1).layers[0]);
    } else if (m.routed()) {
      LoraRouter& router = m.adapters->routers[l];
      Value hp = route_prompt_len == n ? x : g.slice_rows(x, 0, route_prompt_len);
      Value pooled = pool_states_g(
          g, hp, router.pooler,
          router.pooler == PoolerKind::kSelfAttention ? &router.attn_query : nullptr);
      RouteG rg = route_g(g, router, pooled, m.adapters->cfg.router.k,
                          m.adapters->cfg.router.gating, m.adapters->cfg.router.denom);
      out.layer_probs.push_back(rg.probs);
      out.decision.layers.push_back(rg.fixed);
      weighted = m.adapters->cfg.router.gating == GatingMode::kWeighted;
      for (size_t i = 0; i < rg.fixed.experts.size(); ++i) {
        const int e = rg.fixed.experts[i];
        active[e] = true;
        if (weighted)
          value_gates[e] = g.slice_cols(rg.gates, static_cast<int>(i), static_cast<int>(i) + 1);
        else
          const_gates[e] = 1.0;
      }
    }

    auto run_linear = [&](Value in, ModuleId mod) {
      const int mi = static_cast<int>(mod);
      LoraExpert* e = experts && active[mi] ? &experts->experts[mi] : nullptr;
      if (e && weighted) return lora_forward_g(g, in, lw.linear[mi], nullptr, e, value_gates[mi]);
      return lora_forward_g(g, in, lw.linear[mi], nullptr, e, e ? const_gates[mi] : 0.0);
    };

    Value xn = g.rmsnorm(x, g.param(lw.attn_norm), cfg.rms_eps);
    Value q = g.rope(run_linear(xn, ModuleId::kQuery), cfg.n_heads, 0, cfg.rope_base);
    Value k = g.rope(run_linear(xn, ModuleId::kKey), cfg.n_heads, 0, cfg.rope_base);
    Value v = run_linear(xn, ModuleId::kValue);

    std::vector<Value> heads;
    heads.reserve(cfg.n_heads);
    for (int h = 0; h < cfg.n_heads; ++h) {
      Value qh = g.slice_cols(q, h * hd, (h + 1) * hd);
      Value kh = g.slice_cols(k, h * hd, (h + 1) * hd);
      Value vh = g.slice_cols(v, h * hd, (h + 1) * hd);
      Value scores = g.add(g.scale(g.matmul(qh, g.transpose(kh)), inv_scale), g.input(mask));
      heads.push_back(g.matmul(g.softmax_rows(scores), vh));
    }
    Value context = g.concat_cols(heads);
    Value mid = g.add(x, run_linear(context, ModuleId::kOutput));

    Value xn2 = g.rmsnorm(mid, g.param(lw.ffn_norm), cfg.rms_eps);
    Value gate_act = g.silu(run_linear(xn2, ModuleId::kGate));
    Value up = run_linear(xn2, ModuleId::kUp);
    Value down = run_linear(g.mul(gate_act, up), ModuleId::kDown);
    x = g.add(mid, down);
  }

  Value xf = g.rmsnorm(x, g.param(m.backbone.final_norm), cfg.rms_eps);
  out.logits = g.matmul(xf, g.param(m.backbone.lm_head));
  return out;
}

}  // namespace milora
