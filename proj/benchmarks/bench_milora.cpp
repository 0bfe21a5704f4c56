#include <benchmark/benchmark.h>

#include <vector>

#include "milora/build.hpp"
#include "milora/config.hpp"
#include "milora/generate.hpp"
#include "milora/model.hpp"
#include "milora/rng.hpp"
#include "milora/router.hpp"

namespace {

using namespace milora;

RunConfig bench_cfg() {
  RunConfig rc;
  rc.backbone.vocab_size = 16;
  rc.backbone.d_model = 64;
  rc.backbone.n_layers = 4;
  rc.backbone.n_heads = 4;
  rc.backbone.d_ffn = 172;
  rc.backbone.max_seq_len = 64;
  rc.adapters.rank = 8;
  rc.adapters.router.k = 3;
  rc.task.kind = TaskKind::kCopy;
  rc.task.payload_len = 8;
  rc.gen.max_new_tokens = 16;
  rc.gen.greedy = true;
  return rc;
}

// Shared across benchmarks so model construction is paid once.
Model& bench_model() {
  static Model m = [] {
    Model built = model_from_config(bench_cfg());
    // Fill the zero-initialized up-projections so adapter math is exercised.
    for (Parameter* p : built.all_params())
      if (p->name.ends_with(".b")) {
        RngStream rng(7, p->name);
        for (double& v : p->value.data()) v = rng.normal(0.0, 0.05);
      }
    return built;
  }();
  return m;
}

std::vector<int> bench_prompt() {
  return {1, 7, 9, 5, 11, 6, 8, 12, 10, 2};  // BOS payload SEP
}

void BM_Prefill(benchmark::State& state) {
  const Model& m = bench_model();
  const std::vector<int> prompt = bench_prompt();
  for (auto _ : state) {
    PrefillResult r = prefill(m, prompt);
    benchmark::DoNotOptimize(r.logits);
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<int64_t>(prompt.size()));
}
BENCHMARK(BM_Prefill);

void BM_GenerateGreedy_PromptAware(benchmark::State& state) {
  const Model& m = bench_model();
  RunConfig rc = bench_cfg();
  rc.gen.route_mode = RouteMode::kPromptAware;
  const std::vector<int> prompt = bench_prompt();
  for (auto _ : state) {
    GenerationResult r = generate(m, prompt, rc.gen);
    benchmark::DoNotOptimize(r.tokens);
  }
  state.SetItemsProcessed(state.iterations() * rc.gen.max_new_tokens);
}
BENCHMARK(BM_GenerateGreedy_PromptAware);

void BM_GenerateGreedy_PerToken(benchmark::State& state) {
  const Model& m = bench_model();
  RunConfig rc = bench_cfg();
  rc.gen.route_mode = RouteMode::kPerTokenBaseline;
  const std::vector<int> prompt = bench_prompt();
  for (auto _ : state) {
    GenerationResult r = generate(m, prompt, rc.gen);
    benchmark::DoNotOptimize(r.tokens);
  }
  state.SetItemsProcessed(state.iterations() * rc.gen.max_new_tokens);
}
BENCHMARK(BM_GenerateGreedy_PerToken);

void BM_GenerateBeam3_PromptAware(benchmark::State& state) {
  const Model& m = bench_model();
  RunConfig rc = bench_cfg();
  rc.gen.greedy = false;
  rc.gen.beam_size = 3;
  const std::vector<int> prompt = bench_prompt();
  for (auto _ : state) {
    GenerationResult r = generate(m, prompt, rc.gen);
    benchmark::DoNotOptimize(r.tokens);
  }
  state.SetItemsProcessed(state.iterations() * rc.gen.max_new_tokens);
}
BENCHMARK(BM_GenerateBeam3_PromptAware);

void BM_RouterDecision(benchmark::State& state) {
  Model& m = bench_model();
  const Model& cm = m;
  const PrefillResult pre = prefill(cm, bench_prompt());
  const LoraRouter& r = m.adapters->routers[0];
  const RouterSettings& s = m.adapters->cfg.router;
  const Tensor& states = pre.pre_layer[0];
  for (auto _ : state) {
    const Tensor pooled = pool_states(states, r.pooler, &r.attn_query);
    LayerRoute route_out = route(r, pooled, s.k, s.gating, s.denom);
    benchmark::DoNotOptimize(route_out.experts);
  }
}
BENCHMARK(BM_RouterDecision);

void BM_RationalActivation(benchmark::State& state) {
  const RationalActivation act = fit_gelu_rational(6, 5, "bench.act").activation;
  Tensor x(1, 256);
  RngStream rng(3, "bench.rational");
  for (double& v : x.data()) v = rng.normal(0.0, 2.0);
  for (auto _ : state) {
    Tensor y = rational_eval(act, x, DenomMode::kAbsOfSum);
    benchmark::DoNotOptimize(y);
  }
  state.SetItemsProcessed(state.iterations() * x.size());
}
BENCHMARK(BM_RationalActivation);

}  // namespace

BENCHMARK_MAIN();
