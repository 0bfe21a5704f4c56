#include "milora/ablation.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <thread>

#include "milora/build.hpp"
#include "milora/errors.hpp"
#include "milora/report.hpp"

namespace milora {

namespace {

AblationCell cell(std::string label, RunConfig cfg) {
  return AblationCell{std::move(label), std::move(cfg)};
}

std::vector<AblationCell> variant_cells(const RunConfig& base) {
  std::vector<AblationCell> out;
  out.push_back(cell("default", base));
  RunConfig c = base;
  c.adapters.router.pooler = PoolerKind::kMean;
  out.push_back(cell("mean-pooler", c));
  c = base;
  c.adapters.router.pooler = PoolerKind::kLastToken;
  out.push_back(cell("last-token-pooler", c));
  c = base;
  c.router_activation = "gelu";
  out.push_back(cell("gelu-activation", c));
  c = base;
  c.router_activation = "relu_then_gelu";
  out.push_back(cell("relu-then-gelu", c));
  c = base;
  c.router_activation = "gelu_then_relu";
  out.push_back(cell("gelu-then-relu", c));
  return out;
}

std::vector<AblationCell> k_sweep_cells(const RunConfig& base) {
  std::vector<AblationCell> out;
  for (int k = 1; k <= kNumModules; ++k) {
    RunConfig c = base;
    c.adapters.router.k = k;
    out.push_back(cell("k" + std::to_string(k), c));
  }
  RunConfig c = base;
  c.adapters.router.k = kNumModules;
  c.adapters.router.gating = GatingMode::kBinary;
  out.push_back(cell("k7-binary", c));
  c = base;
  c.adapters.mode = AdapterMode::kAlwaysOn;
  out.push_back(cell("always-on", c));
  return out;
}

std::vector<AblationCell> lambda_sweep_cells(const RunConfig& base) {
  std::vector<AblationCell> out;
  for (double lam : {0.0, 1e-3, 1e-2, 1e-1, 1.0}) {
    RunConfig c = base;
    c.train.lb_weight = lam;
    out.push_back(cell("lambda-" + format_double(lam), c));
  }
  return out;
}

std::vector<AblationCell> rank_sweep_cells(const RunConfig& base) {
  std::vector<AblationCell> out;
  for (int r : {2, 4, 8, 16, 32}) {
    RunConfig c = base;
    c.adapters.rank = r;
    out.push_back(cell("rank-" + std::to_string(r), c));
  }
  return out;
}

// Each repetition's seed mixes the base seed with the cell label and the
// repetition index, so cells never share streams and any one of them can be
// regenerated alone.
uint64_t cell_seed(uint64_t base_seed, const std::string& label, int rep) {
  return base_seed ^ fnv1a64(label + "#" + std::to_string(rep));
}

AblationResult run_one(const AblationCell& c, uint64_t seed) {
  RunConfig cfg = c.config;
  cfg.seed = seed;
  cfg.validate();
  const DatasetSplit data = dataset_from_config(cfg);
  Model m = build_model(cfg, data);
  Trainer trainer(m, train_config_for_run(cfg));
  const TrainResult tr = trainer.train(data.train, data.dev);
  AblationResult out;
  out.label = c.label;
  out.dev_ppl = tr.best_eval.ppl;
  out.dev_acc = tr.best_eval.next_token_acc;
  out.lb_loss = tr.best_eval.lb;
  out.max_expert_freq = tr.best_eval.max_expert_freq;
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::vector<AblationCell> ablation_cells(const std::string& preset, const RunConfig& base) {
  if (preset == "variants") return variant_cells(base);
  if (preset == "k-sweep") return k_sweep_cells(base);
  if (preset == "lambda-sweep") return lambda_sweep_cells(base);
  if (preset == "rank-sweep") return rank_sweep_cells(base);
  throw ConfigError("ablation: unknown preset '" + preset +
                    "' (variants, k-sweep, lambda-sweep, rank-sweep)");
}

std::vector<AblationResult> run_ablation(const std::string& preset, const RunConfig& base,
                                         int seeds, int threads) {
  if (seeds < 1) throw ConfigError("ablation: seeds must be >= 1");
  if (threads < 1) throw ConfigError("ablation: threads must be >= 1");
  const std::vector<AblationCell> cells = ablation_cells(preset, base);

  struct Job {
    int cell = 0, rep = 0;
  };
  std::vector<Job> jobs;
  for (int ci = 0; ci < static_cast<int>(cells.size()); ++ci)
    for (int rep = 0; rep < seeds; ++rep) jobs.push_back({ci, rep});

  // Every job writes only its own slot, so the merge below is independent of
  // scheduling.
  std::vector<std::vector<AblationResult>> slots(
      cells.size(), std::vector<AblationResult>(static_cast<size_t>(seeds)));
  std::atomic<size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;
  auto worker = [&] {
    for (;;) {
      const size_t j = next.fetch_add(1);
      if (j >= jobs.size()) return;
      try {
        const Job& job = jobs[j];
        const AblationCell& c = cells[static_cast<size_t>(job.cell)];
        slots[static_cast<size_t>(job.cell)][static_cast<size_t>(job.rep)] =
            run_one(c, cell_seed(base.seed, c.label, job.rep));
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  std::vector<AblationResult> out;
  for (size_t ci = 0; ci < cells.size(); ++ci) {
    std::vector<double> ppl, acc, lb, freq;
    for (const AblationResult& r : slots[ci]) {
      ppl.push_back(r.dev_ppl);
      acc.push_back(r.dev_acc);
      lb.push_back(r.lb_loss);
      freq.push_back(r.max_expert_freq);
    }
    out.push_back({cells[ci].label, median(ppl), median(acc), median(lb), median(freq)});
  }
  return out;
}

std::string ablation_csv(const std::vector<AblationResult>& rows) {
  std::string out = "cell,dev_ppl,dev_acc,lb_loss,max_expert_freq\n";
  for (const AblationResult& r : rows)
    out += r.label + "," + format_double(r.dev_ppl) + "," + format_double(r.dev_acc) +
           "," + format_double(r.lb_loss) + "," + format_double(r.max_expert_freq) + "\n";
  return out;
}

}  // namespace milora
