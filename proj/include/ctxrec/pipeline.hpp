#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ctxrec/checkpoint.hpp"
#include "ctxrec/config.hpp"
#include "ctxrec/data.hpp"
#include "ctxrec/eval.hpp"
#include "ctxrec/pretrain.hpp"
#include "ctxrec/ranker.hpp"

namespace ctxrec {

/// Implicit conversion (for star ratings) or the activity filter (for
/// labels), then vocabularies, context encoding and splits.
Dataset prepare_dataset(InteractionTable raw, const ExperimentConfig& config);

/// Reads `config.data.path` and prepares it. A missing file is a config error.
Dataset load_dataset(const ExperimentConfig& config);

/// Embedding tables seeded from the experiment seed.
FeatureSpace make_feature_space(const Dataset& dataset, const ExperimentConfig& config);

/// Pre-trained model together with the feature space it was trained on.
struct PretrainBundle {
  PretrainModel model;
  FeatureSpace features;
  std::vector<EpochLoss> trace;
};

PretrainBundle run_pretrain(const Dataset& dataset, const ExperimentConfig& config);

/// Trains the ranker on the training rows plus sampled negatives. `pretrained`
/// must be set exactly when the integration mode is not `none`.
RankerResult run_ranker(const Dataset& dataset, const ExperimentConfig& config,
                        const PretrainBundle* pretrained);

struct ExperimentResult {
  std::optional<PretrainBundle> pretrain;
  RankerResult ranker;
  EvaluationReport metrics;
};

/// Pre-train (if integrated), train, evaluate.
ExperimentResult run_experiment(const Dataset& dataset, const ExperimentConfig& config);

Checkpoint make_pretrain_checkpoint(const PretrainBundle& bundle, const Dataset& dataset,
                                    const ExperimentConfig& config);
/// Throws DataError if the checkpoint does not match the dataset's encoding.
PretrainBundle restore_pretrain(const Checkpoint& checkpoint, const Dataset& dataset);

Checkpoint make_ranker_checkpoint(const RankerModel& model, const Dataset& dataset,
                                  const ExperimentConfig& config);
RankerModel restore_ranker(const Checkpoint& checkpoint, const Dataset& dataset);

struct SweepRow {
  std::size_t heads = 0;
  EvaluationReport metrics;
  std::optional<double> mean_cosine;  // absent for K = 1
};

/// One full experiment per head count in `config.sweep_heads`.
std::vector<SweepRow> run_sweep(const Dataset& dataset, const ExperimentConfig& config);

struct AblationRow {
  std::string group;
  double full_auc = 0.0;
  double ablated_auc = 0.0;
  double delta = 0.0;
};

/// Leave-one-feature-out over `config.ablation_groups` (every context column
/// if empty).
std::vector<AblationRow> run_ablation(const Dataset& dataset, const ExperimentConfig& config);

/// Assembled clean pre-training inputs.
std::vector<Vector> pretrain_inputs(const Dataset& dataset, const FeatureSpace& features);

}  // namespace ctxrec
