#include "milora/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <limits>
#include <sstream>

#include "milora/errors.hpp"
#include "milora/ops.hpp"
#include "milora/rng.hpp"
#include "milora/router.hpp"

namespace milora {

namespace {

void check_seq(const EncodedSeq& s) {
  if (s.inputs.empty()) throw ContractError("training sequence is empty");
  if (s.inputs.size() != s.targets.size() || s.inputs.size() != s.loss_mask.size())
    throw ContractError("training sequence arrays disagree in length");
  if (s.prompt_len < 1 || s.prompt_len > static_cast<int>(s.inputs.size()))
    throw ContractError("training sequence prompt length out of range");
}

// Prompt-region routing hook for one example, identical to what the
// generation engine does during prefill.
RoutingHook prompt_hook(const Model& m, int prompt_len) {
  return [&m, prompt_len](int layer, const Tensor& pre) {
    const LoraRouter& r = m.adapters->routers[static_cast<size_t>(layer)];
    const RouterSettings& rs = m.adapters->cfg.router;
    Tensor prompt_states =
        pre.rows() == prompt_len ? pre : take_rows(pre, 0, prompt_len);
    Tensor pooled = pool_states(prompt_states, r.pooler, &r.attn_query);
    return route(r, pooled, rs.k, rs.gating, rs.denom);
  };
}

}  // namespace

void TrainConfig::validate() const {
  if (lr_omega <= 0.0 || lr_theta <= 0.0)
    throw ConfigError("train: learning rates must be positive");
  if (lb_weight < 0.0) throw ConfigError("train: lb_weight must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
  if (eval_every < 1) throw ConfigError("train: eval_every must be >= 1");
  if (patience < 1) throw ConfigError("train: patience must be >= 1");
  if (warmup_frac < 0.0 || warmup_frac >= 1.0)
    throw ConfigError("train: warmup_frac must be in [0, 1)");
}

Value lm_cross_entropy(Graph& g, Value logits, const std::vector<int>& targets,
                       const std::vector<uint8_t>& mask) {
  int64_t count = 0;
  for (uint8_t b : mask) count += b ? 1 : 0;
  if (count == 0) throw ContractError("cross entropy: every position is masked out");
  return g.scale(g.ce_sum(logits, targets, mask), 1.0 / static_cast<double>(count));
}

Value load_balance_loss(Graph& g, const std::vector<Tensor>& hard_frac,
                        const std::vector<Value>& mean_prob) {
  if (hard_frac.empty() || hard_frac.size() != mean_prob.size())
    throw ContractError("load balance loss: layer statistics disagree");
  const int n_mod = hard_frac[0].cols();
  Value acc;
  for (size_t l = 0; l < hard_frac.size(); ++l) {
    Value dot = g.sum(g.mul(g.input(hard_frac[l]), mean_prob[l]));
    Value layer = g.scale(dot, static_cast<double>(n_mod));
    acc = l == 0 ? layer : g.add(acc, layer);
  }
  return g.scale(acc, 1.0 / static_cast<double>(hard_frac.size()));
}

double load_balance_value(const std::vector<Tensor>& hard_frac,
                          const std::vector<Tensor>& mean_prob) {
  if (hard_frac.empty() || hard_frac.size() != mean_prob.size())
    throw ContractError("load balance value: layer statistics disagree");
  const int n_mod = hard_frac[0].cols();
  double acc = 0.0;
  for (size_t l = 0; l < hard_frac.size(); ++l) {
    double dot = 0.0;
    for (int i = 0; i < n_mod; ++i) dot += hard_frac[l].at(0, i) * mean_prob[l].at(0, i);
    acc += static_cast<double>(n_mod) * dot;
  }
  return acc / static_cast<double>(hard_frac.size());
}

BatchLoss batch_loss(Graph& g, Model& m, const std::vector<EncodedSeq>& batch,
                     double lb_weight, bool include_lb_grad) {
  if (batch.empty()) throw ContractError("batch loss: empty batch");
  const bool routed = m.routed();
  const int n_layers = m.cfg.n_layers;

  BatchLoss out;
  Value ce_total;
  std::vector<std::vector<Value>> layer_probs(static_cast<size_t>(n_layers));
  for (const EncodedSeq& seq : batch) {
    check_seq(seq);
    GraphForward fg = forward_g(g, m, seq.inputs, seq.prompt_len);
    Value ce = g.ce_sum(fg.logits, seq.targets, seq.loss_mask);
    ce_total = ce_total.valid() ? g.add(ce_total, ce) : ce;
    for (uint8_t b : seq.loss_mask) out.token_count += b ? 1 : 0;
    if (routed)
      for (int l = 0; l < n_layers; ++l)
        layer_probs[static_cast<size_t>(l)].push_back(fg.layer_probs[static_cast<size_t>(l)]);
  }
  if (out.token_count == 0) throw ContractError("batch loss: every position is masked out");
  out.ce = g.scale(ce_total, 1.0 / static_cast<double>(out.token_count));
  out.ce_value = out.ce.t().at(0, 0);
  out.total = out.ce;

  if (routed) {
    std::vector<Tensor> hard(static_cast<size_t>(n_layers));
    std::vector<Value> mean_p(static_cast<size_t>(n_layers));
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    for (int l = 0; l < n_layers; ++l) {
      auto& probs = layer_probs[static_cast<size_t>(l)];
      std::vector<Tensor> prob_values;
      prob_values.reserve(probs.size());
      for (const Value& v : probs) prob_values.push_back(v.t());
      hard[static_cast<size_t>(l)] = hard_fractions(prob_values);
      Value sum = probs[0];
      for (size_t i = 1; i < probs.size(); ++i) sum = g.add(sum, probs[i]);
      mean_p[static_cast<size_t>(l)] = g.scale(sum, inv_b);
    }
    out.lb = load_balance_loss(g, hard, mean_p);
    out.lb_value = out.lb.t().at(0, 0);
    if (lb_weight > 0.0 && include_lb_grad)
      out.total = g.add(out.total, g.scale(out.lb, lb_weight));
  }
  return out;
}

EvalResult evaluate(const Model& m, const std::vector<EncodedSeq>& data) {
  if (data.empty()) throw ContractError("evaluate: empty dataset");
  const bool routed = m.routed();
  const int n_layers = m.cfg.n_layers;

  double nll_sum = 0.0;
  int64_t token_count = 0, correct = 0;
  std::vector<std::vector<int64_t>> select_counts(
      static_cast<size_t>(n_layers), std::vector<int64_t>(kNumModules, 0));
  std::vector<std::vector<int64_t>> argmax_counts(
      static_cast<size_t>(n_layers), std::vector<int64_t>(kNumModules, 0));
  std::vector<Tensor> prob_sums(static_cast<size_t>(n_layers),
                                Tensor(1, kNumModules));

  for (const EncodedSeq& seq : data) {
    check_seq(seq);
    PrefillResult pr;
    if (routed) {
      RoutingHook hook = prompt_hook(m, seq.prompt_len);
      pr = prefill(m, seq.inputs, &hook);
      for (int l = 0; l < n_layers; ++l) {
        const LayerRoute& lr = pr.decision.layers[static_cast<size_t>(l)];
        for (int e : lr.experts) select_counts[static_cast<size_t>(l)][static_cast<size_t>(e)]++;
        argmax_counts[static_cast<size_t>(l)][static_cast<size_t>(argmax_row(lr.probs, 0))]++;
        prob_sums[static_cast<size_t>(l)].add_inplace(lr.probs);
      }
    } else {
      pr = prefill(m, seq.inputs);
    }
    Tensor probs = softmax_rows(pr.logits);
    for (size_t i = 0; i < seq.targets.size(); ++i) {
      if (!seq.loss_mask[i]) continue;
      const int r = static_cast<int>(i);
      nll_sum += -std::log(std::max(probs.at(r, seq.targets[i]), 1e-300));
      correct += argmax_row(pr.logits, r) == seq.targets[i] ? 1 : 0;
      token_count++;
    }
  }
  if (token_count == 0) throw ContractError("evaluate: every position is masked out");

  EvalResult out;
  out.ppl = std::exp(nll_sum / static_cast<double>(token_count));
  out.next_token_acc = static_cast<double>(correct) / static_cast<double>(token_count);
  out.selection_freq = Tensor(n_layers, kNumModules);
  const double inv_n = 1.0 / static_cast<double>(data.size());
  if (routed) {
    std::vector<Tensor> hard(static_cast<size_t>(n_layers), Tensor(1, kNumModules));
    std::vector<Tensor> mean_p(static_cast<size_t>(n_layers));
    for (int l = 0; l < n_layers; ++l) {
      for (int e = 0; e < kNumModules; ++e) {
        out.selection_freq.at(l, e) =
            static_cast<double>(select_counts[static_cast<size_t>(l)][static_cast<size_t>(e)]) * inv_n;
        const double f =
            static_cast<double>(argmax_counts[static_cast<size_t>(l)][static_cast<size_t>(e)]) * inv_n;
        hard[static_cast<size_t>(l)].at(0, e) = f;
        out.max_expert_freq = std::max(out.max_expert_freq, f);
      }
      Tensor mp = prob_sums[static_cast<size_t>(l)];
      mp.scale_inplace(inv_n);
      mean_p[static_cast<size_t>(l)] = mp;
    }
    out.lb = load_balance_value(hard, mean_p);
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& layer : select_counts)
      for (int64_t c : layer) h = fnv1a64(&c, sizeof c, h);
    out.hist_hash = h;
  }
  return out;
}

Trainer::Trainer(Model& model, TrainConfig cfg)
    : model_(model),
      cfg_(cfg),
      task_opt_(model.trainable_params(ParamGroup::kTask),
                AdamWConfig{cfg.lr_omega, 0.9, 0.999, 1e-8, 0.0}) {
  cfg_.validate();
  if (task_opt_.params().empty())
    throw ContractError("trainer: model has no task-group parameters to train");
  auto arch = model.trainable_params(ParamGroup::kArch);
  if (!arch.empty())
    arch_opt_.emplace(arch, AdamWConfig{cfg.lr_theta, 0.9, 0.999, 1e-8, 0.0});
}

BatchLoss Trainer::bilevel_step(const std::vector<EncodedSeq>& train_batch,
                                const std::vector<EncodedSeq>& val_batch,
                                double lr_scale) {
  if (train_batch.empty()) throw ContractError("bilevel step: empty training batch");

  // Phase one: task parameters on the training batch.
  task_opt_.zero_grad();
  if (arch_opt_) arch_opt_->zero_grad();
  BatchLoss train_loss;
  {
    Graph g;
    train_loss = batch_loss(g, model_, train_batch, cfg_.lb_weight);
    g.backward(train_loss.total);
  }
  task_opt_.step(lr_scale);

  // Phase two: architecture coefficients on the validation batch.
  if (arch_opt_) {
    if (val_batch.empty()) throw ContractError("bilevel step: empty validation batch");
    arch_opt_->zero_grad();
    task_opt_.zero_grad();
    {
      Graph g;
      BatchLoss val_loss =
          batch_loss(g, model_, val_batch, cfg_.lb_weight, cfg_.lb_in_arch_step);
      g.backward(val_loss.total);
    }
    arch_opt_->step(lr_scale);
  }
  return train_loss;
}

TrainResult Trainer::train(const std::vector<EncodedSeq>& train_split,
                           const std::vector<EncodedSeq>& dev_split,
                           const std::function<void(const TrainLogRow&)>& progress) {
  if (train_split.empty() || dev_split.empty())
    throw ContractError("train: both splits must be nonempty");

  const int64_t steps_per_epoch =
      (static_cast<int64_t>(train_split.size()) + cfg_.batch_size - 1) / cfg_.batch_size;
  int64_t planned = steps_per_epoch * cfg_.max_epochs;
  if (cfg_.max_steps > 0) planned = std::min(planned, cfg_.max_steps);
  const int64_t warmup =
      std::max<int64_t>(1, static_cast<int64_t>(std::llround(cfg_.warmup_frac *
                                                             static_cast<double>(planned))));

  RngStream batch_rng(cfg_.seed, "train.batches");
  std::vector<size_t> order(train_split.size());
  std::iota(order.begin(), order.end(), 0);

  // Validation batches for the architecture phase cycle through the dev set.
  size_t val_cursor = 0;
  auto next_val_batch = [&]() {
    std::vector<EncodedSeq> batch;
    for (int i = 0; i < cfg_.batch_size; ++i) {
      batch.push_back(dev_split[val_cursor]);
      val_cursor = (val_cursor + 1) % dev_split.size();
    }
    return batch;
  };

  TrainResult out;
  auto snapshot_params = [&]() {
    std::vector<Tensor> snap;
    for (Parameter* p : model_.all_params())
      if (p->trainable) snap.push_back(p->value);
    return snap;
  };
  auto restore_params = [&](const std::vector<Tensor>& snap) {
    size_t i = 0;
    for (Parameter* p : model_.all_params())
      if (p->trainable) p->value = snap[i++];
  };

  std::vector<Tensor> best_snapshot = snapshot_params();
  double best_ppl = std::numeric_limits<double>::infinity();
  int64_t best_step = 0;
  int evals_since_best = 0;
  int64_t step = 0;
  bool stop = false;

  for (int epoch = 0; epoch < cfg_.max_epochs && !stop; ++epoch) {
    // Deterministic in-place shuffle.
    for (size_t i = order.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(
          batch_rng.uniform_int(0, static_cast<int>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }
    for (int64_t b = 0; b < steps_per_epoch && !stop; ++b) {
      std::vector<EncodedSeq> batch;
      for (int i = 0; i < cfg_.batch_size; ++i) {
        const size_t idx = order[(static_cast<size_t>(b) * cfg_.batch_size + i) %
                                 train_split.size()];
        batch.push_back(train_split[idx]);
      }
      const double lr_scale = warmup_linear_decay(step, planned, warmup);
      BatchLoss loss = bilevel_step(batch, next_val_batch(), lr_scale);
      if (!std::isfinite(loss.ce_value) || !std::isfinite(loss.lb_value)) {
        std::ostringstream msg;
        msg << "training diverged at step " << step << ": ce=" << loss.ce_value
            << " lb=" << loss.lb_value;
        throw ContractError(msg.str());
      }
      ++step;

      if (step % cfg_.eval_every == 0 || step == planned) {
        EvalResult ev = evaluate(model_, dev_split);
        TrainLogRow row;
        row.step = step;
        row.train_loss = loss.ce_value + (cfg_.lb_weight > 0.0
                                              ? cfg_.lb_weight * loss.lb_value
                                              : 0.0);
        row.dev_ppl = ev.ppl;
        row.lb = ev.lb;
        row.hist_hash = ev.hist_hash;
        out.log.push_back(row);
        if (progress) progress(row);

        if (ev.ppl < best_ppl) {
          best_ppl = ev.ppl;
          best_step = step;
          best_snapshot = snapshot_params();
          evals_since_best = 0;
        } else if (++evals_since_best >= cfg_.patience) {
          stop = true;
          out.stopped_early = true;
        }
      }
      if (step >= planned) stop = true;
    }
  }

  restore_params(best_snapshot);
  out.best_step = best_step;
  out.best_ppl = best_ppl;
  out.best_eval = evaluate(model_, dev_split);
  out.steps_taken = step;
  return out;
}

}  // namespace milora
