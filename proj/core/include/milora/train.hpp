#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "milora/model.hpp"
#include "milora/optim.hpp"

namespace milora {

// One teacher-forced sequence: model inputs, next-token targets, and the
// supervision mask (response positions only).  prompt_len is the number of
// leading rows the routers pool over.
struct EncodedSeq {
  std::vector<int> inputs;
  std::vector<int> targets;
  std::vector<uint8_t> loss_mask;
  int prompt_len = 0;
};

struct TrainConfig {
  double lr_omega = 1e-4;   // adapters, router weights, pool queries
  double lr_theta = 1e-6;   // rational activation coefficients
  double lb_weight = 1e-2;  // coefficient on the load-balancing loss
  int batch_size = 16;
  int max_epochs = 50;
  int64_t max_steps = 2000;  // hard cap on optimizer steps; <= 0 disables
  int eval_every = 50;       // steps between dev evaluations
  int patience = 10;         // evaluations without improvement before stopping
  double warmup_frac = 0.06;
  // Whether the load-balancing term also shapes the architecture-coefficient
  // update (the alternating scheme's second phase).
  bool lb_in_arch_step = true;
  uint64_t seed = 1;

  void validate() const;  // throws ConfigError
};

// Mean negative log-likelihood over unmasked positions.  Throws
// ContractError when the mask selects nothing.
Value lm_cross_entropy(Graph& g, Value logits, const std::vector<int>& targets,
                       const std::vector<uint8_t>& mask);

// Load-balancing loss from explicit per-layer statistics: for each layer
// N_mod * sum_i f_i * p_i with f entering as a constant, averaged over
// layers.  hard_frac and mean_prob run parallel, one entry per layer.
Value load_balance_loss(Graph& g, const std::vector<Tensor>& hard_frac,
                        const std::vector<Value>& mean_prob);

// The same quantity on plain tensors (logging/evaluation path).
double load_balance_value(const std::vector<Tensor>& hard_frac,
                          const std::vector<Tensor>& mean_prob);

// Differentiable batch loss over full teacher-forced forwards.
struct BatchLoss {
  Value total;              // optimized objective: ce (+ lb_weight * lb)
  Value ce;                 // mean cross entropy node
  Value lb;                 // load-balance node; invalid when the model has no routers
  double ce_value = 0.0;
  double lb_value = 0.0;    // 0 when the model has no routers
  int64_t token_count = 0;  // unmasked positions in the batch
};
// lb_weight <= 0 keeps the balance term out of the optimized objective (it
// is still evaluated for logging).  include_lb_grad=false does the same
// regardless of weight (architecture steps with the balance term disabled).
BatchLoss batch_loss(Graph& g, Model& m, const std::vector<EncodedSeq>& batch,
                     double lb_weight, bool include_lb_grad = true);

// Dev-set evaluation through the plain value engine (no graphs).  Routing
// uses each example's prompt region, exactly as generation-time prefill
// would.
struct EvalResult {
  double ppl = 0.0;              // exp(mean CE over response tokens)
  double next_token_acc = 0.0;   // argmax accuracy over response tokens
  double lb = 0.0;               // load-balance value over the eval batch
  double max_expert_freq = 0.0;  // max over layers/modules of argmax fraction
  Tensor selection_freq;         // n_layers x kNumModules, top-k selection rates
  uint64_t hist_hash = 0;        // order-sensitive hash of selection counts
};
EvalResult evaluate(const Model& m, const std::vector<EncodedSeq>& data);

struct TrainLogRow {
  int64_t step = 0;
  double train_loss = 0.0;
  double dev_ppl = 0.0;
  double lb = 0.0;
  uint64_t hist_hash = 0;
};

struct TrainResult {
  std::vector<TrainLogRow> log;
  int64_t best_step = 0;
  double best_ppl = 0.0;
  EvalResult best_eval;       // evaluation at the restored best parameters
  int64_t steps_taken = 0;
  bool stopped_early = false;
};

// Alternating first-order bi-level optimization: adapters/routers step on
// training batches, rational coefficients step on validation batches, each
// group invisible to the other optimizer.
class Trainer {
 public:
  Trainer(Model& model, TrainConfig cfg);

  // One alternating update.  lr_scale multiplies both learning rates
  // (schedules pass their multiplier).  Returns the training-batch loss
  // breakdown from phase one.
  BatchLoss bilevel_step(const std::vector<EncodedSeq>& train_batch,
                         const std::vector<EncodedSeq>& val_batch, double lr_scale = 1.0);

  // Epochs over train with periodic dev evaluation, early stopping on dev
  // perplexity with the configured patience, and restoration of the best
  // parameters.  Aborts with ContractError diagnostics if the loss stops
  // being finite.  progress (optional) is called after every log row.
  TrainResult train(const std::vector<EncodedSeq>& train_split,
                    const std::vector<EncodedSeq>& dev_split,
                    const std::function<void(const TrainLogRow&)>& progress = nullptr);

  AdamW& task_optimizer() { return task_opt_; }
  AdamW* arch_optimizer() { return arch_opt_ ? &*arch_opt_ : nullptr; }

 private:
  Model& model_;
  TrainConfig cfg_;
  AdamW task_opt_;
  std::optional<AdamW> arch_opt_;  // absent when no architecture parameters exist
};

}  // namespace milora
