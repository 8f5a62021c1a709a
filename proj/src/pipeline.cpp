#include "ctxrec/pipeline.hpp"

#include <filesystem>

#include "ctxrec/error.hpp"

namespace ctxrec {

namespace {

using json = nlohmann::json;

constexpr const char* kEmbeddingUsers = "embedding.users";
constexpr const char* kEmbeddingItems = "embedding.items";

void append_prefixed(TensorList& out, const TensorList& params, const std::string& prefix) {
  for (const auto& t : params) {
    out.push_back({prefix + t.name, t.value});
  }
}

TensorList take_prefixed(const TensorList& tensors, const std::string& prefix) {
  TensorList out;
  for (const auto& t : tensors) {
    if (t.name.starts_with(prefix)) {
      out.push_back({t.name.substr(prefix.size()), t.value});
    }
  }
  return out;
}

json parse_checkpoint_config(const Checkpoint& ck) {
  try {
    return json::parse(ck.config_json);
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint config is not valid JSON: ") + e.what());
  }
}

FeatureSpace restore_features(const Checkpoint& ck, const json& meta, const Dataset& dataset) {
  const std::string encoder = meta.at("context").dump();
  if (json::parse(context_encoder_json(dataset.context)) != meta.at("context")) {
    throw DataError("checkpoint was trained on a different context encoding (" + encoder + ")");
  }
  const auto& users = find_tensor(ck.tensors, kEmbeddingUsers);
  const auto& items = find_tensor(ck.tensors, kEmbeddingItems);
  if (users.rows() != dataset.users.size() || items.rows() != dataset.items.size()) {
    throw DataError("checkpoint vocabularies do not match the dataset");
  }
  FeatureSpace space;
  space.users = EmbeddingTable(EntityKind::user, users.rows(), users.cols());
  space.users.weights() = users;
  space.items = EmbeddingTable(EntityKind::item, items.rows(), items.cols());
  space.items.weights() = items;
  space.side_dim = meta.at("side_dim").get<std::size_t>();
  if (space.side_dim != dataset.side_dim()) {
    throw DataError("checkpoint side-feature width does not match the dataset");
  }
  return space;
}

json checkpoint_meta(const Dataset& dataset, const ExperimentConfig& config) {
  return {{"experiment", to_json(config)},
          {"context", json::parse(context_encoder_json(dataset.context))},
          {"side_dim", dataset.side_dim()}};
}

template <typename F>
auto checkpoint_field(F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed checkpoint metadata: ") + e.what());
  }
}

}  // namespace

Dataset prepare_dataset(InteractionTable raw, const ExperimentConfig& config) {
  InteractionTable table = raw.explicit_ratings
                               ? convert_implicit(raw, config.data.implicit)
                               : filter_min_interactions(raw, config.data.implicit.min_reviews);
  if (table.rows.empty()) {
    throw DataError("no interactions left after filtering users with fewer than " +
                    std::to_string(config.data.implicit.min_reviews) + " rows");
  }
  return build_dataset(std::move(table), config.data.split, config.seed);
}

Dataset load_dataset(const ExperimentConfig& config) {
  if (!std::filesystem::is_regular_file(config.data.path)) {
    throw ConfigError("data.path", "data file '" + config.data.path + "' does not exist");
  }
  return prepare_dataset(read_tsv_file(config.data.path), config);
}

FeatureSpace make_feature_space(const Dataset& dataset, const ExperimentConfig& config) {
  return FeatureSpace::create(dataset.users.size(), dataset.items.size(), config.embedding_dim,
                              dataset.side_dim(), config.seed);
}

std::vector<Vector> pretrain_inputs(const Dataset& dataset, const FeatureSpace& features) {
  std::vector<Vector> out;
  for (auto& x : build_pretrain_set(dataset, features)) {
    out.push_back(std::move(x.values));
  }
  return out;
}

PretrainBundle run_pretrain(const Dataset& dataset, const ExperimentConfig& config) {
  PretrainBundle bundle;
  bundle.features = make_feature_space(dataset, config);
  PretrainConfig pc = config.pretrain;
  pc.input_dim = bundle.features.input_dim();
  pc.seed = config.seed;
  PretrainResult result = pretrain_fit(pretrain_inputs(dataset, bundle.features), pc);
  bundle.model = std::move(result.model);
  bundle.trace = std::move(result.trace);
  return bundle;
}

RankerResult run_ranker(const Dataset& dataset, const ExperimentConfig& config,
                        const PretrainBundle* pretrained) {
  RankerConfig rc = config.ranker;
  rc.seed = config.seed;
  const bool integrated = rc.integration != IntegrationMode::none;
  if (integrated && pretrained == nullptr) {
    throw ConfigError("ranker.integration", "integration '" + to_string(rc.integration) +
                                                "' requires a pre-trained model");
  }
  FeatureSpace features =
      integrated ? pretrained->features : make_feature_space(dataset, config);
  std::optional<PretrainModel> attached;
  if (integrated) {
    attached = pretrained->model;
  }
  RankerModel init = RankerModel::initialize(rc, std::move(features), std::move(attached));
  const auto train =
      with_training_negatives(dataset, dataset.train, config.data.train_negatives, config.seed);
  return ranker_fit(train, std::move(init));
}

ExperimentResult run_experiment(const Dataset& dataset, const ExperimentConfig& config) {
  ExperimentResult result;
  if (config.ranker.integration != IntegrationMode::none) {
    result.pretrain = run_pretrain(dataset, config);
  }
  result.ranker = run_ranker(dataset, config, result.pretrain ? &*result.pretrain : nullptr);
  result.metrics = evaluate_ranking(result.ranker.model, dataset, config.eval, config.seed);
  return result;
}

Checkpoint make_pretrain_checkpoint(const PretrainBundle& bundle, const Dataset& dataset,
                                    const ExperimentConfig& config) {
  Checkpoint ck;
  ck.kind = "pretrain/" + to_string(bundle.model.kind());
  json meta = checkpoint_meta(dataset, config);
  meta["pretrain"] = to_json(bundle.model.config());
  ck.config_json = meta.dump();
  ck.tensors.push_back({kEmbeddingUsers, bundle.features.users.weights()});
  ck.tensors.push_back({kEmbeddingItems, bundle.features.items.weights()});
  append_prefixed(ck.tensors, bundle.model.parameters(), "pretrain.");
  return ck;
}

PretrainBundle restore_pretrain(const Checkpoint& checkpoint, const Dataset& dataset) {
  if (!checkpoint.kind.starts_with("pretrain/")) {
    throw DataError("expected a pre-training checkpoint, got kind '" + checkpoint.kind + "'");
  }
  const json meta = parse_checkpoint_config(checkpoint);
  return checkpoint_field([&] {
    PretrainBundle bundle;
    bundle.features = restore_features(checkpoint, meta, dataset);
    bundle.model = PretrainModel(pretrain_config_from_json(meta.at("pretrain")),
                                 take_prefixed(checkpoint.tensors, "pretrain."));
    return bundle;
  });
}

Checkpoint make_ranker_checkpoint(const RankerModel& model, const Dataset& dataset,
                                  const ExperimentConfig& config) {
  Checkpoint ck;
  ck.kind = "ranker";
  json meta = checkpoint_meta(dataset, config);
  meta["ranker"] = to_json(model.config());
  if (model.has_pretrained()) {
    meta["pretrain"] = to_json(model.pretrained().config());
  }
  ck.config_json = meta.dump();
  ck.tensors.push_back({kEmbeddingUsers, model.features().users.weights()});
  ck.tensors.push_back({kEmbeddingItems, model.features().items.weights()});
  append_prefixed(ck.tensors, model.parameters(), "ranker.");
  if (model.has_pretrained()) {
    append_prefixed(ck.tensors, model.pretrained().parameters(), "pretrain.");
  }
  return ck;
}

RankerModel restore_ranker(const Checkpoint& checkpoint, const Dataset& dataset) {
  if (checkpoint.kind != "ranker") {
    throw DataError("expected a ranker checkpoint, got kind '" + checkpoint.kind + "'");
  }
  const json meta = parse_checkpoint_config(checkpoint);
  return checkpoint_field([&] {
    std::optional<PretrainModel> pretrained;
    if (meta.contains("pretrain")) {
      pretrained = PretrainModel(pretrain_config_from_json(meta.at("pretrain")),
                                 take_prefixed(checkpoint.tensors, "pretrain."));
    }
    return RankerModel(ranker_config_from_json(meta.at("ranker")),
                       restore_features(checkpoint, meta, dataset),
                       take_prefixed(checkpoint.tensors, "ranker."), std::move(pretrained));
  });
}

std::vector<SweepRow> run_sweep(const Dataset& dataset, const ExperimentConfig& config) {
  if (config.ranker.integration == IntegrationMode::none) {
    throw ConfigError("ranker.integration",
                      "the head sweep needs feature_based or fine_tune integration");
  }
  std::vector<SweepRow> rows;
  for (std::size_t k : config.sweep_heads) {
    ExperimentConfig c = config;
    c.pretrain.heads = k;
    const ExperimentResult result = run_experiment(dataset, c);
    SweepRow row;
    row.heads = k;
    row.metrics = result.metrics;
    if (k >= 2) {
      auto inputs = pretrain_inputs(dataset, result.pretrain->features);
      inputs.resize(std::min(inputs.size(), config.analysis.samples));
      row.mean_cosine = head_cosine_stats(result.pretrain->model, inputs).mean_cosine;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<AblationRow> run_ablation(const Dataset& dataset, const ExperimentConfig& config) {
  std::vector<std::string> groups = config.ablation_groups;
  if (groups.empty()) {
    groups.insert(groups.end(), dataset.table.categorical_columns.begin(),
                  dataset.table.categorical_columns.end());
    groups.insert(groups.end(), dataset.table.dense_columns.begin(),
                  dataset.table.dense_columns.end());
  }
  if (groups.empty()) {
    throw ConfigError("ablation.groups", "the dataset has no context columns to ablate");
  }
  for (const auto& g : groups) {
    if (!dataset.context.has_column(g)) {
      throw ConfigError("ablation.groups", "unknown feature group '" + g + "'");
    }
  }
  const auto recipe = [&](const Dataset& ds) {
    return run_experiment(ds, config).metrics.value("auc");
  };
  const double full = recipe(dataset);
  std::vector<AblationRow> rows;
  for (const auto& g : groups) {
    const double ablated = recipe(dataset.without_feature(g));
    rows.push_back({g, full, ablated, full - ablated});
  }
  return rows;
}

}  // namespace ctxrec
