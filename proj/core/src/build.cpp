#include "milora/build.hpp"

#include <algorithm>

#include "milora/errors.hpp"

namespace milora {

namespace {

void attach_adapters(Model& m, const RunConfig& rc) {
  AdapterStackConfig acfg = rc.adapters;
  acfg.layer_activation = rc.resolved_activations();
  m.adapters = init_adapters(rc.backbone, acfg, rc.seed);
}

}  // namespace

Model model_from_config(const RunConfig& rc) {
  rc.validate();
  Model m;
  m.cfg = rc.backbone;
  m.backbone = init_backbone(rc.backbone, rc.seed);
  if (rc.adapters_enabled) attach_adapters(m, rc);
  return m;
}

DatasetSplit dataset_from_config(const RunConfig& rc) {
  return make_dataset(rc.resolved_task(), rc.task_examples, rc.backbone.vocab_size,
                      rc.seed);
}

TrainConfig train_config_for_run(const RunConfig& rc) {
  TrainConfig tc = rc.train;
  tc.seed = rc.seed;
  return tc;
}

std::optional<TrainResult> pretrain_backbone(Model& m, const RunConfig& rc,
                                             const DatasetSplit& data) {
  if (rc.pretrain_steps <= 0) return std::nullopt;
  if (m.adapters)
    throw ContractError("pretrain: adapters must be attached after the warm-up");
  TrainConfig tc;
  tc.lr_omega = rc.pretrain_lr;
  tc.lr_theta = rc.pretrain_lr;  // no architecture group exists at this point
  tc.lb_weight = 0.0;            // no routers either
  tc.batch_size = rc.train.batch_size;
  tc.max_epochs = 1000000;  // step cap below is the real budget
  tc.max_steps = rc.pretrain_steps;
  tc.eval_every = std::max(1, rc.pretrain_steps / 4);
  tc.patience = 1000000;  // run the full budget
  tc.warmup_frac = rc.train.warmup_frac;
  tc.seed = rc.seed;
  m.backbone.set_trainable(true);
  Trainer trainer(m, tc);
  TrainResult result = trainer.train(data.train, data.dev);
  m.backbone.set_trainable(false);
  return result;
}

Model build_model(const RunConfig& rc, const DatasetSplit& data) {
  rc.validate();
  Model m;
  m.cfg = rc.backbone;
  m.backbone = init_backbone(rc.backbone, rc.seed);
  pretrain_backbone(m, rc, data);
  if (rc.adapters_enabled) attach_adapters(m, rc);
  return m;
}

}  // namespace milora
