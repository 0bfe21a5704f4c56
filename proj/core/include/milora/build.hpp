#pragma once

#include <optional>

#include "milora/config.hpp"
#include "milora/dataset.hpp"
#include "milora/model.hpp"
#include "milora/train.hpp"

namespace milora {

// Architecture exactly as the config describes it: seeded frozen backbone
// plus, when enabled, seeded adapters and routers.  No training happens
// here, so the result is a pure function of (config, seed).
Model model_from_config(const RunConfig& rc);

// Task data for the run, a pure function of (config, seed).
DatasetSplit dataset_from_config(const RunConfig& rc);

// Training settings with the run seed threaded through.
TrainConfig train_config_for_run(const RunConfig& rc);

// Optional backbone language-model warm-up: unfreezes the backbone, fits it
// on the task data with no adapters attached, restores the best weights and
// refreezes.  Requires an adapter-free model; returns the warm-up trace, or
// nothing when the config asks for zero steps.
std::optional<TrainResult> pretrain_backbone(Model& m, const RunConfig& rc,
                                             const DatasetSplit& data);

// Full assembly for a run: seeded backbone, optional warm-up on the task
// data, adapters attached last so the warm-up never sees them.
Model build_model(const RunConfig& rc, const DatasetSplit& data);

}  // namespace milora
