#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "milora/ablation.hpp"
#include "milora/build.hpp"
#include "milora/checkpoint.hpp"
#include "milora/errors.hpp"
#include "milora/generate.hpp"
#include "milora/report.hpp"

namespace {

using namespace milora;

// The output directory comes from the run config unless the environment
// overrides it.
std::string resolve_out_dir(const RunConfig& rc) {
  if (const char* env = std::getenv("MILORA_OUT_DIR"); env && *env) return env;
  return rc.out_dir;
}

std::string join_path(const std::string& dir, const std::string& file) {
  return (std::filesystem::path(dir) / file).string();
}

// A config file that cannot be read is a usage problem, not a runtime one.
RunConfig load_config_cli(const std::string& path) {
  try {
    return load_config(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
}

RunConfig load_with_overrides(const std::string& path,
                              const std::vector<std::string>& sets) {
  RunConfig rc = load_config_cli(path);
  for (const std::string& s : sets) apply_override(rc, s);
  rc.validate();
  return rc;
}

std::vector<int> parse_prompt(const std::string& csv, int vocab_size) {
  std::vector<int> out;
  std::string item;
  std::stringstream ss(csv);
  while (std::getline(ss, item, ',')) {
    size_t pos = 0;
    int tok = 0;
    try {
      tok = std::stoi(item, &pos);
    } catch (const std::exception&) {
      throw ConfigError("prompt: '" + item + "' is not a token id");
    }
    if (pos != item.size()) throw ConfigError("prompt: '" + item + "' is not a token id");
    if (tok < 0 || tok >= vocab_size)
      throw ConfigError("prompt: token " + std::to_string(tok) + " outside vocab [0, " +
                        std::to_string(vocab_size) + ")");
    out.push_back(tok);
  }
  if (out.empty()) throw ConfigError("prompt: no tokens given");
  return out;
}

std::string tokens_to_csv(const std::vector<int>& toks) {
  std::string out;
  for (size_t i = 0; i < toks.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(toks[i]);
  }
  return out;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& sets,
              bool init_only) {
  RunConfig rc = load_with_overrides(config_path, sets);
  const std::string out_dir = resolve_out_dir(rc);
  const DatasetSplit data = dataset_from_config(rc);
  std::cout << "dataset: " << data.train.size() << " train / " << data.dev.size()
            << " dev sequences\n";
  Model m = build_model(rc, data);
  if (!init_only) {
    Trainer trainer(m, train_config_for_run(rc));
    const TrainResult tr = trainer.train(data.train, data.dev, [](const TrainLogRow& r) {
      std::cout << "step " << r.step << "  loss " << r.train_loss << "  dev_ppl "
                << r.dev_ppl << "  lb " << r.lb << "\n";
    });
    write_text_file(join_path(out_dir, "train_log.csv"), train_log_csv(tr.log));
    std::cout << "best: step " << tr.best_step << "  dev_ppl " << tr.best_eval.ppl
              << "  next_token_acc " << tr.best_eval.next_token_acc << "\n";
  }
  save_checkpoint(join_path(out_dir, "checkpoint.milora"), snapshot(rc, m));
  std::cout << "wrote " << join_path(out_dir, "checkpoint.milora") << "\n";
  return 0;
}

int cmd_generate(const std::string& ckpt_path, const std::string& prompt_csv,
                 const std::vector<std::string>& sets) {
  const Checkpoint ck = load_checkpoint(ckpt_path);
  RunConfig rc = ck.config;
  for (const std::string& s : sets) apply_override(rc, s);
  rc.validate();
  const Model m = restore_model(Checkpoint{rc, ck.tensors});
  const std::vector<int> prompt = parse_prompt(prompt_csv, rc.backbone.vocab_size);
  const GenerationResult res = generate(m, prompt, rc.gen);
  std::cout << "tokens: " << tokens_to_csv(res.tokens) << "\n"
            << "mean_logprob: " << format_double(res.mean_logprob) << "\n"
            << "router_evals: " << res.counters.router_evals << "\n"
            << "adapter_macs: " << res.counters.adapter_macs << "\n"
            << "activated_params: " << res.counters.activated_params << "\n";
  return 0;
}

int cmd_bench(const std::string& ckpt_path, const std::string& modes_csv,
              const std::string& prompt_csv, const std::vector<std::string>& sets) {
  const Checkpoint ck = load_checkpoint(ckpt_path);
  RunConfig rc = ck.config;
  for (const std::string& s : sets) apply_override(rc, s);
  rc.validate();
  const Model m = restore_model(Checkpoint{rc, ck.tensors});
  const std::vector<int> prompt = parse_prompt(
      prompt_csv.empty() ? "1" : prompt_csv, rc.backbone.vocab_size);

  std::vector<BenchRow> rows;
  std::string item;
  std::stringstream ss(modes_csv);
  while (std::getline(ss, item, ',')) {
    GenerationConfig gen = rc.gen;
    if (item == "prompt_aware") {
      gen.route_mode = RouteMode::kPromptAware;
    } else if (item == "per_token") {
      gen.route_mode = RouteMode::kPerTokenBaseline;
    } else {
      throw ConfigError("bench: unknown mode '" + item +
                        "' (prompt_aware, per_token)");
    }
    const auto t0 = std::chrono::steady_clock::now();
    const GenerationResult res = generate(m, prompt, gen);
    const auto t1 = std::chrono::steady_clock::now();
    const double secs = std::chrono::duration<double>(t1 - t0).count();
    BenchRow row;
    row.mode = item;
    if (m.routed()) {
      row.k = rc.adapters.router.k;
      row.gating =
          rc.adapters.router.gating == GatingMode::kBinary ? "binary" : "weighted";
    } else {
      row.k = kNumModules;
      row.gating = "always_on";
    }
    row.tokens = static_cast<int64_t>(res.tokens.size());
    row.router_evals = res.counters.router_evals;
    row.adapter_macs = res.counters.adapter_macs;
    row.activated_params = res.counters.activated_params;
    row.wall_tps = secs > 0.0 ? static_cast<double>(res.tokens.size()) / secs : 0.0;
    rows.push_back(row);
  }
  const std::string table = bench_csv(rows);
  write_text_file(join_path(resolve_out_dir(rc), "bench.csv"), table);
  std::cout << table << bench_summary(rows);
  return 0;
}

int cmd_ablate(const std::string& preset, const std::string& config_path,
               const std::vector<std::string>& sets, int seeds, int threads) {
  RunConfig rc = config_path.empty() ? RunConfig{} : load_config_cli(config_path);
  for (const std::string& s : sets) apply_override(rc, s);
  rc.validate();
  const auto results = run_ablation(preset, rc, seeds, threads);
  const std::string table = ablation_csv(results);
  write_text_file(join_path(resolve_out_dir(rc), "ablation_" + preset + ".csv"), table);
  std::cout << table;
  return 0;
}

int cmd_route_dump(const std::string& ckpt_path, const std::string& dataset_arg,
                   const std::vector<std::string>& sets) {
  const Checkpoint ck = load_checkpoint(ckpt_path);
  RunConfig rc = ck.config;
  for (const std::string& s : sets) apply_override(rc, s);
  // The dataset argument is either a config file (its task section wins) or
  // a bare task kind routed with this checkpoint's task settings.
  if (std::filesystem::exists(dataset_arg)) {
    const RunConfig data_rc = load_config_cli(dataset_arg);
    rc.task = data_rc.task;
    rc.task_mix = data_rc.task_mix;
    rc.task_examples = data_rc.task_examples;
  } else {
    apply_override(rc, "task.kind=" + dataset_arg);
  }
  rc.validate();
  const Model m = restore_model(Checkpoint{rc, ck.tensors});
  if (!m.routed())
    throw ConfigError("route-dump: checkpoint has no routers (always-on or disabled)");
  const DatasetSplit data = dataset_from_config(rc);
  const Tensor freq = expert_selection_frequency(m, data.dev);
  const std::string table = distribution_csv(freq);
  write_text_file(join_path(resolve_out_dir(rc), "expert_distribution.csv"), table);
  std::cout << table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Per-prompt mixture-of-LoRA trainer and generation engine"};
  app.require_subcommand(1);

  std::vector<std::string> sets;
  std::string config_path, ckpt_path, prompt_csv, modes_csv = "prompt_aware,per_token";
  std::string preset, dataset_arg;
  bool init_only = false;
  int seeds = 5, threads = 1;
  auto add_sets = [&sets](CLI::App* sub) {
    sub->add_option("--set", sets, "Override a config key (key=value), repeatable");
  };

  CLI::App* train = app.add_subcommand("train", "Train adapters from a config file");
  train->add_option("config", config_path, "Run config file")->required();
  train->add_flag("--init-only", init_only,
                  "Write the freshly initialized checkpoint without training");
  add_sets(train);

  CLI::App* gen = app.add_subcommand("generate", "Generate from a checkpoint");
  gen->add_option("ckpt", ckpt_path, "Checkpoint file")->required();
  gen->add_option("--prompt", prompt_csv, "Comma-separated token ids")->required();
  add_sets(gen);

  CLI::App* bench = app.add_subcommand("bench", "Routing-cost comparison table");
  bench->add_option("ckpt", ckpt_path, "Checkpoint file")->required();
  bench->add_option("--modes", modes_csv, "Comma-separated modes to run");
  bench->add_option("--prompt", prompt_csv, "Probe prompt (token ids)");
  add_sets(bench);

  CLI::App* ablate = app.add_subcommand("ablate", "Run an ablation preset");
  ablate->add_option("preset", preset, "variants | k-sweep | lambda-sweep | rank-sweep")
      ->required();
  ablate->add_option("--config", config_path, "Base run config file");
  ablate->add_option("--seeds", seeds, "Repetitions per cell");
  ablate->add_option("--threads", threads, "Worker threads");
  add_sets(ablate);

  CLI::App* dump = app.add_subcommand("route-dump", "Expert selection frequencies");
  dump->add_option("ckpt", ckpt_path, "Checkpoint file")->required();
  dump->add_option("dataset", dataset_arg, "Task kind or config file")->required();
  add_sets(dump);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*train) return cmd_train(config_path, sets, init_only);
    if (*gen) return cmd_generate(ckpt_path, prompt_csv, sets);
    if (*bench) return cmd_bench(ckpt_path, modes_csv, prompt_csv, sets);
    if (*ablate) return cmd_ablate(preset, config_path, sets, seeds, threads);
    if (*dump) return cmd_route_dump(ckpt_path, dataset_arg, sets);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
