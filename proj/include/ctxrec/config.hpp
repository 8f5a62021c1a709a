#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ctxrec/data.hpp"
#include "ctxrec/eval.hpp"
#include "ctxrec/pretrain.hpp"
#include "ctxrec/ranker.hpp"
#include "json.hpp"

namespace ctxrec {

struct DataConfig {
  std::string path;
  ImplicitRule implicit;  // min_reviews also filters label files
  SplitStrategy split;
  std::size_t train_negatives = 4;
};

struct AnalysisConfig {
  std::size_t samples = 1000;  // pre-training inputs used for head statistics
};

/// Everything needed to reproduce one experiment. A single master seed feeds
/// every stochastic stage through derived streams.
struct ExperimentConfig {
  std::string preset;
  std::uint64_t seed = 0;
  DataConfig data;
  std::size_t embedding_dim = 64;
  PretrainConfig pretrain;
  RankerConfig ranker;
  EvalProtocol eval;
  AnalysisConfig analysis;
  std::vector<std::string> ablation_groups;  // empty: every context column
  std::vector<std::size_t> sweep_heads = {1, 2, 4, 8};
  std::string output_dir = "ctxrec-out";

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

std::vector<std::string> preset_names();

/// Preset values as a JSON object that a config file is merged over.
nlohmann::json preset_json(const std::string& name);

/// Parses a config document. `preset` (if set) overrides the document's own
/// "preset" key; `seed` (if set) overrides "seed". Unknown keys are rejected.
ExperimentConfig parse_experiment_config(const nlohmann::json& document,
                                         const std::optional<std::string>& preset = std::nullopt,
                                         const std::optional<std::uint64_t>& seed = std::nullopt);

ExperimentConfig load_experiment_config(const std::string& path,
                                        const std::optional<std::string>& preset = std::nullopt,
                                        const std::optional<std::uint64_t>& seed = std::nullopt);

nlohmann::json to_json(const ExperimentConfig& config);
nlohmann::json to_json(const PretrainConfig& config);
nlohmann::json to_json(const RankerConfig& config);
PretrainConfig pretrain_config_from_json(const nlohmann::json& j);
RankerConfig ranker_config_from_json(const nlohmann::json& j);

}  // namespace ctxrec
