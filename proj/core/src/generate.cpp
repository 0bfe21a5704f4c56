#include "milora/generate.hpp"

#include <algorithm>
#include <cmath>

#include "milora/errors.hpp"
#include "milora/ops.hpp"
#include "milora/router.hpp"

namespace milora {

namespace {

std::vector<double> log_softmax_row(const Tensor& logits, int row) {
  std::vector<double> out(static_cast<size_t>(logits.cols()));
  double mx = logits.at(row, 0);
  for (int c = 1; c < logits.cols(); ++c) mx = std::max(mx, logits.at(row, c));
  double z = 0.0;
  for (int c = 0; c < logits.cols(); ++c) z += std::exp(logits.at(row, c) - mx);
  const double lz = std::log(z);
  for (int c = 0; c < logits.cols(); ++c)
    out[static_cast<size_t>(c)] = logits.at(row, c) - mx - lz;
  return out;
}

int argmax_lp(const std::vector<double>& lp) {
  int best = 0;
  for (int c = 1; c < static_cast<int>(lp.size()); ++c)
    if (lp[static_cast<size_t>(c)] > lp[static_cast<size_t>(best)]) best = c;
  return best;
}

// Routes a layer from everything prefill shows it (the whole prompt).
RoutingHook prompt_aware_hook(const Model& m, OpCounters& ctr) {
  return [&m, &ctr](int layer, const Tensor& pre) {
    const LoraRouter& r = m.adapters->routers[static_cast<size_t>(layer)];
    const RouterSettings& rs = m.adapters->cfg.router;
    ctr.router_evals++;
    Tensor pooled = pool_states(pre, r.pooler, &r.attn_query);
    return route(r, pooled, rs.k, rs.gating, rs.denom);
  };
}

// Routes a layer from the current position's states alone — the last row of
// whatever the engine captured.  During prefill that is the final prompt
// position (the first generated token's routing); during decode it is the
// single incoming row.  sink collects the per-layer routes of one step.
RoutingHook per_token_hook(const Model& m, OpCounters& ctr, RoutingDecision* sink) {
  return [&m, &ctr, sink](int layer, const Tensor& pre) {
    const LoraRouter& r = m.adapters->routers[static_cast<size_t>(layer)];
    const RouterSettings& rs = m.adapters->cfg.router;
    ctr.router_evals++;
    Tensor last = pre.rows() == 1 ? pre : take_rows(pre, pre.rows() - 1, pre.rows());
    Tensor pooled = pool_states(last, r.pooler, &r.attn_query);
    LayerRoute lr = route(r, pooled, rs.k, rs.gating, rs.denom);
    if (sink) {
      if (static_cast<int>(sink->layers.size()) <= layer)
        sink->layers.resize(static_cast<size_t>(layer) + 1);
      sink->layers[static_cast<size_t>(layer)] = lr;
    }
    return lr;
  };
}

// State both decoding paths start from: validated config, routing hook,
// prefill of the prompt, and the first position's log-probabilities.
struct Prepared {
  bool routed = false;
  bool prompt_aware = true;
  RoutingDecision step_decision;  // baseline: routes of the current step
  RoutingHook hook;
  PrefillResult pr;
  uint64_t prompt_fp = 0;
  std::vector<double> first_lp;
};

Prepared prepare(const Model& m, const std::vector<int>& prompt,
                 const GenerationConfig& cfg, GenerationResult& out) {
  cfg.validate();
  if (prompt.empty()) throw ContractError("generate: empty prompt");
  if (static_cast<int>(prompt.size()) + cfg.max_new_tokens > m.cfg.max_seq_len)
    throw ContractError("generate: prompt plus max_new_tokens exceeds max_seq_len");

  Prepared p;
  p.routed = m.routed();
  p.prompt_aware = cfg.route_mode == RouteMode::kPromptAware;
  if (p.routed)
    p.hook = p.prompt_aware ? prompt_aware_hook(m, out.counters)
                            : per_token_hook(m, out.counters, &p.step_decision);
  p.pr = prefill(m, prompt, p.routed ? &p.hook : nullptr, &out.counters);
  out.prompt_decision = p.pr.decision;
  p.prompt_fp = p.routed ? p.pr.decision.fingerprint() : 0;
  p.first_lp = log_softmax_row(p.pr.logits, p.pr.logits.rows() - 1);
  return p;
}

// One decode step for a given routing regime, advancing `cache`.
Tensor step_logits(const Model& m, int token, KvCache& cache, Prepared& p,
                   OpCounters& ctr) {
  if (!p.routed) return decode_step(m, token, cache, nullptr, nullptr, &ctr);
  if (p.prompt_aware)
    return decode_step(m, token, cache, &p.pr.decision, nullptr, &ctr);
  p.step_decision.layers.clear();
  return decode_step(m, token, cache, nullptr, &p.hook, &ctr);
}

uint64_t step_fp(const Prepared& p) {
  if (!p.routed) return 0;
  return p.prompt_aware ? p.prompt_fp : p.step_decision.fingerprint();
}

struct Beam {
  std::vector<int> tokens;
  double lp_sum = 0.0;
  KvCache cache;  // covers the prompt plus all tokens except the last
  bool finished = false;

  double mean_lp() const {
    return lp_sum / static_cast<double>(std::max<size_t>(tokens.size(), 1));
  }
};

struct Candidate {
  int beam = 0;
  int token = 0;  // -1 marks a finished beam carried forward unchanged
  double lp_sum = 0.0;
};

}  // namespace

void GenerationConfig::validate() const {
  if (max_new_tokens < 0) throw ConfigError("generation: max_new_tokens must be >= 0");
  if (beam_size < 1) throw ConfigError("generation: beam_size must be >= 1");
}

GenerationResult generate_greedy(const Model& m, const std::vector<int>& prompt,
                                 const GenerationConfig& cfg) {
  GenerationResult out;
  Prepared p = prepare(m, prompt, cfg, out);
  if (cfg.max_new_tokens == 0) return out;  // prefill-only request

  int tok = argmax_lp(p.first_lp);
  out.tokens.push_back(tok);
  out.step_fingerprints.push_back(p.prompt_fp);
  double lp_sum = p.first_lp[static_cast<size_t>(tok)];
  KvCache cache = p.pr.cache;
  while (static_cast<int>(out.tokens.size()) < cfg.max_new_tokens &&
         tok != cfg.eos_id) {
    Tensor logits = step_logits(m, tok, cache, p, out.counters);
    auto lp = log_softmax_row(logits, 0);
    tok = argmax_lp(lp);
    lp_sum += lp[static_cast<size_t>(tok)];
    out.tokens.push_back(tok);
    out.step_fingerprints.push_back(step_fp(p));
  }
  out.mean_logprob = lp_sum / static_cast<double>(out.tokens.size());
  return out;
}

GenerationResult generate_beam(const Model& m, const std::vector<int>& prompt,
                               const GenerationConfig& cfg) {
  GenerationResult out;
  Prepared p = prepare(m, prompt, cfg, out);
  if (cfg.max_new_tokens == 0) return out;  // prefill-only request

  // Seed the beams from the first position's distribution.
  std::vector<Candidate> init;
  for (int v = 0; v < static_cast<int>(p.first_lp.size()); ++v)
    init.push_back({0, v, p.first_lp[static_cast<size_t>(v)]});
  std::sort(init.begin(), init.end(), [](const Candidate& a, const Candidate& b) {
    if (a.lp_sum != b.lp_sum) return a.lp_sum > b.lp_sum;
    return a.token < b.token;
  });
  const int width = std::min<int>(cfg.beam_size, static_cast<int>(init.size()));

  std::vector<Beam> beams;
  for (int i = 0; i < width; ++i) {
    Beam b;
    b.tokens = {init[static_cast<size_t>(i)].token};
    b.lp_sum = init[static_cast<size_t>(i)].lp_sum;
    b.cache = p.pr.cache;
    b.finished = init[static_cast<size_t>(i)].token == cfg.eos_id;
    beams.push_back(std::move(b));
  }
  out.step_fingerprints.push_back(p.prompt_fp);

  for (int pos = 1; pos < cfg.max_new_tokens; ++pos) {
    bool any_alive = false;
    for (const Beam& b : beams) any_alive = any_alive || !b.finished;
    if (!any_alive) break;

    std::vector<Candidate> cands;
    std::vector<KvCache> advanced(beams.size());
    bool fp_recorded = false;
    for (int bi = 0; bi < static_cast<int>(beams.size()); ++bi) {
      Beam& b = beams[static_cast<size_t>(bi)];
      if (b.finished) {
        cands.push_back({bi, -1, b.lp_sum});
        continue;
      }
      Tensor logits = step_logits(m, b.tokens.back(), b.cache, p, out.counters);
      if (!fp_recorded) {
        out.step_fingerprints.push_back(step_fp(p));
        fp_recorded = true;
      }
      advanced[static_cast<size_t>(bi)] = b.cache;
      auto lp = log_softmax_row(logits, 0);
      for (int v = 0; v < static_cast<int>(lp.size()); ++v)
        cands.push_back({bi, v, b.lp_sum + lp[static_cast<size_t>(v)]});
    }

    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      if (a.lp_sum != b.lp_sum) return a.lp_sum > b.lp_sum;
      if (a.beam != b.beam) return a.beam < b.beam;
      return a.token < b.token;
    });

    std::vector<Beam> next;
    for (const Candidate& c : cands) {
      if (static_cast<int>(next.size()) == width) break;
      const Beam& parent = beams[static_cast<size_t>(c.beam)];
      if (c.token < 0) {
        next.push_back(parent);  // finished beam rides along unchanged
        continue;
      }
      Beam nb;
      nb.tokens = parent.tokens;
      nb.tokens.push_back(c.token);
      nb.lp_sum = c.lp_sum;
      nb.cache = advanced[static_cast<size_t>(c.beam)];
      nb.finished = c.token == cfg.eos_id;
      next.push_back(std::move(nb));
    }
    beams = std::move(next);
  }

  int winner = 0;
  for (int i = 1; i < static_cast<int>(beams.size()); ++i)
    if (beams[static_cast<size_t>(i)].mean_lp() > beams[static_cast<size_t>(winner)].mean_lp())
      winner = i;
  out.tokens = beams[static_cast<size_t>(winner)].tokens;
  out.mean_logprob = beams[static_cast<size_t>(winner)].mean_lp();
  return out;
}

GenerationResult generate(const Model& m, const std::vector<int>& prompt,
                          const GenerationConfig& cfg) {
  cfg.validate();
  return cfg.greedy || cfg.beam_size == 1 ? generate_greedy(m, prompt, cfg)
                                          : generate_beam(m, prompt, cfg);
}

}  // namespace milora
