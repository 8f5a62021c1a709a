#include "ctxrec/config.hpp"

#include <fstream>
#include <limits>
#include <set>

#include "ctxrec/error.hpp"

namespace ctxrec {

namespace {

using json = nlohmann::json;

// Reads the members of one JSON object, remembering which keys were consumed
// so that unknown keys can be reported with their full path.
class Section {
 public:
  Section(const json& object, std::string path) : object_(object), path_(std::move(path)) {
    if (!object_.is_object()) {
      throw ConfigError(path_.empty() ? "config" : path_, "expected a JSON object");
    }
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = object_.find(key);
    return it == object_.end() || it->is_null() ? nullptr : &*it;
  }

  bool has(const std::string& key) const { return object_.contains(key); }

  void read(const std::string& key, std::size_t& out) {
    if (const json* v = find(key)) {
      out = as_count(*v, field(key));
    }
  }
  void read(const std::string& key, std::uint64_t& out, bool) {
    if (const json* v = find(key)) {
      out = as_count(*v, field(key));
    }
  }
  void read(const std::string& key, std::int64_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) {
        throw ConfigError(field(key), "expected an integer");
      }
      out = v->get<std::int64_t>();
    }
  }
  void read(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) {
        throw ConfigError(field(key), "expected a number");
      }
      out = v->get<double>();
    }
  }
  void read(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) {
        throw ConfigError(field(key), "expected true or false");
      }
      out = v->get<bool>();
    }
  }
  void read(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) {
        throw ConfigError(field(key), "expected a string");
      }
      out = v->get<std::string>();
    }
  }
  void read(const std::string& key, std::vector<std::size_t>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) {
        throw ConfigError(field(key), "expected an array of counts");
      }
      out.clear();
      for (const auto& e : *v) {
        out.push_back(as_count(e, field(key)));
      }
    }
  }
  void read(const std::string& key, std::vector<std::string>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) {
        throw ConfigError(field(key), "expected an array of strings");
      }
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_string()) {
          throw ConfigError(field(key), "expected an array of strings");
        }
        out.push_back(e.get<std::string>());
      }
    }
  }

  std::optional<Section> section(const std::string& key) {
    if (const json* v = find(key)) {
      return Section(*v, field(key));
    }
    return std::nullopt;
  }

  void finish() const {
    for (const auto& [key, value] : object_.items()) {
      if (!seen_.contains(key)) {
        throw ConfigError(field(key), "unknown configuration key");
      }
    }
  }

 private:
  static std::uint64_t as_count(const json& v, const std::string& field) {
    if (v.is_number_unsigned()) {
      return v.get<std::uint64_t>();
    }
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) {
      return static_cast<std::uint64_t>(v.get<std::int64_t>());
    }
    throw ConfigError(field, "expected a non-negative integer");
  }

  const json& object_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_pretrain(Section& s, PretrainConfig& c, bool with_derived) {
  if (const json* v = s.find("model")) {
    if (!v->is_string()) throw ConfigError(s.field("model"), "expected a string");
    c.kind = parse_model_kind(v->get<std::string>());
  }
  s.read("heads", c.heads);
  s.read("hidden_dim", c.hidden_dim);
  s.read("keep_probability", c.keep_probability);
  s.read("penalty", c.penalty);
  s.read("epsilon", c.epsilon);
  if (const json* v = s.find("penalty_mode")) {
    if (!v->is_string()) throw ConfigError(s.field("penalty_mode"), "expected a string");
    c.penalty_mode = parse_penalty_mode(v->get<std::string>());
  }
  if (const json* v = s.find("pairs")) {
    if (!v->is_string()) throw ConfigError(s.field("pairs"), "expected a string");
    c.pairs = parse_pair_convention(v->get<std::string>());
  }
  s.read("epochs", c.epochs);
  s.read("batch_size", c.batch_size);
  s.read("learning_rate", c.learning_rate);
  if (with_derived) {
    s.read("input_dim", c.input_dim);
    s.read("seed", c.seed, true);
  }
  s.finish();
}

void read_ranker(Section& s, RankerConfig& c, bool with_derived) {
  s.read("hidden", c.hidden);
  if (const json* v = s.find("integration")) {
    if (!v->is_string()) throw ConfigError(s.field("integration"), "expected a string");
    c.integration = parse_integration_mode(v->get<std::string>());
  }
  s.read("epochs", c.epochs);
  s.read("batch_size", c.batch_size);
  s.read("learning_rate", c.learning_rate);
  s.read("train_embeddings", c.train_embeddings);
  if (with_derived) {
    s.read("seed", c.seed, true);
  }
  s.finish();
}

// Re-raises a module-level ConfigError with the section prefix.
template <typename F>
void prefixed(const std::string& prefix, F&& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    const std::string& field = e.field();
    throw ConfigError(field.starts_with(prefix + ".") ? field : prefix + "." + field, e.what());
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  if (data.path.empty()) {
    throw ConfigError("data.path", "a data file path is required");
  }
  if (!(data.implicit.scale_min < data.implicit.scale_max)) {
    throw ConfigError("data.rating_scale", "rating scale must be [min, max] with min < max");
  }
  if (data.split.kind == SplitKind::ratio &&
      !(data.split.fraction > 0.0 && data.split.fraction < 1.0)) {
    throw ConfigError("data.split.fraction", "split fraction must lie in (0, 1)");
  }
  if (data.split.kind == SplitKind::time_cutoff) {
    if (data.split.train_window <= 0) {
      throw ConfigError("data.split.train_window", "train_window must be positive");
    }
    if (data.split.test_window <= 0) {
      throw ConfigError("data.split.test_window", "test_window must be positive");
    }
    if (data.split.pretrain_window < 0) {
      throw ConfigError("data.split.pretrain_window", "pretrain_window must be >= 0");
    }
  }
  if (embedding_dim == 0) {
    throw ConfigError("embedding.dim", "embedding dimension must be positive");
  }
  PretrainConfig p = pretrain;
  p.input_dim = 1;  // derived from the data at run time
  prefixed("pretrain", [&] { p.validate(); });
  prefixed("ranker", [&] { ranker.validate(); });
  prefixed("eval", [&] { eval.validate(); });
  if (analysis.samples == 0) {
    throw ConfigError("analysis.samples", "analysis needs at least one sample");
  }
  if (sweep_heads.empty()) {
    throw ConfigError("sweep.heads", "the sweep needs at least one head count");
  }
  for (std::size_t k : sweep_heads) {
    if (k == 0 || pretrain.hidden_dim % k != 0) {
      throw ConfigError("sweep.heads", "head count " + std::to_string(k) +
                                           " must divide pretrain.hidden_dim " +
                                           std::to_string(pretrain.hidden_dim));
    }
  }
  if (output_dir.empty()) {
    throw ConfigError("output.dir", "output directory must be non-empty");
  }
}

std::vector<std::string> preset_names() { return {"yelp-like", "dianping-like", "ctr-like"}; }

nlohmann::json preset_json(const std::string& name) {
  if (name == "yelp-like") {
    return {{"data", {{"min_reviews", 20}, {"split", {{"strategy", "ratio"}, {"fraction", 0.8}}}}},
            {"embedding", {{"dim", 64}}},
            {"pretrain",
             {{"model", "macdae"}, {"heads", 4}, {"hidden_dim", 256}, {"penalty", 0.005}}},
            {"ranker", {{"hidden", {256}}, {"integration", "fine_tune"}}}};
  }
  if (name == "dianping-like") {
    return {{"data", {{"min_reviews", 4}, {"split", {{"strategy", "leave_one_out"}}}}},
            {"embedding", {{"dim", 64}}},
            {"pretrain",
             {{"model", "macdae"}, {"heads", 4}, {"hidden_dim", 128}, {"penalty", 0.005}}},
            {"ranker", {{"hidden", {128}}, {"integration", "fine_tune"}}}};
  }
  if (name == "ctr-like") {
    // 30 days of training, the next day for testing, 14 days of positives for pre-training.
    return {{"data",
             {{"min_reviews", 0},
              {"split",
               {{"strategy", "time_cutoff"},
                {"train_window", 30 * 86400},
                {"test_window", 86400},
                {"pretrain_window", 14 * 86400}}}}},
            {"embedding", {{"dim", 64}}},
            {"pretrain",
             {{"model", "macdae"}, {"heads", 8}, {"hidden_dim", 256}, {"penalty", 0.05}}},
            {"ranker", {{"hidden", {512, 256, 256}}, {"integration", "feature_based"}}}};
  }
  std::string known;
  for (const auto& n : preset_names()) {
    known += (known.empty() ? "" : ", ") + n;
  }
  throw ConfigError("preset", "unknown preset '" + name + "' (expected one of " + known + ")");
}

ExperimentConfig parse_experiment_config(const nlohmann::json& document,
                                         const std::optional<std::string>& preset,
                                         const std::optional<std::uint64_t>& seed) {
  if (!document.is_object()) {
    throw ConfigError("config", "the config document must be a JSON object");
  }
  std::string preset_name = preset.value_or("");
  if (!preset && document.contains("preset")) {
    if (!document["preset"].is_string()) {
      throw ConfigError("preset", "expected a string");
    }
    preset_name = document["preset"].get<std::string>();
  }
  json merged = preset_name.empty() ? json::object() : preset_json(preset_name);
  merged.merge_patch(document);
  merged.erase("preset");

  ExperimentConfig c;
  c.preset = preset_name;
  Section root(merged, "");
  if (seed) {
    c.seed = *seed;
    (void)root.find("seed");
  } else if (!root.has("seed") || merged["seed"].is_null()) {
    throw ConfigError("seed", "missing required field 'seed'");
  } else {
    root.read("seed", c.seed, true);
  }
  if (auto data = root.section("data")) {
    data->read("path", c.data.path);
    if (const json* scale = data->find("rating_scale")) {
      if (!scale->is_array() || scale->size() != 2 || !(*scale)[0].is_number() ||
          !(*scale)[1].is_number()) {
        throw ConfigError("data.rating_scale", "expected [min, max]");
      }
      c.data.implicit.scale_min = (*scale)[0].get<double>();
      c.data.implicit.scale_max = (*scale)[1].get<double>();
    }
    data->read("positive_threshold", c.data.implicit.positive_threshold);
    data->read("min_reviews", c.data.implicit.min_reviews);
    data->read("train_negatives", c.data.train_negatives);
    if (auto split = data->section("split")) {
      std::string strategy = to_string(c.data.split.kind);
      split->read("strategy", strategy);
      c.data.split.kind = parse_split_kind(strategy);
      split->read("fraction", c.data.split.fraction);
      split->read("cutoff", c.data.split.cutoff);
      split->read("train_window", c.data.split.train_window);
      split->read("test_window", c.data.split.test_window);
      split->read("pretrain_window", c.data.split.pretrain_window);
      split->finish();
      if (c.data.split.kind == SplitKind::time_cutoff && !split->has("cutoff")) {
        throw ConfigError("data.split.cutoff", "time_cutoff split requires a cutoff timestamp");
      }
    }
    data->finish();
  }
  if (auto emb = root.section("embedding")) {
    emb->read("dim", c.embedding_dim);
    emb->finish();
  }
  if (auto p = root.section("pretrain")) {
    prefixed("pretrain", [&] { read_pretrain(*p, c.pretrain, false); });
  }
  if (auto r = root.section("ranker")) {
    prefixed("ranker", [&] { read_ranker(*r, c.ranker, false); });
  }
  if (auto e = root.section("eval")) {
    e->read("k", c.eval.k);
    e->read("negatives", c.eval.negatives);
    e->finish();
  }
  if (auto a = root.section("analysis")) {
    a->read("samples", c.analysis.samples);
    a->finish();
  }
  if (auto a = root.section("ablation")) {
    a->read("groups", c.ablation_groups);
    a->finish();
  }
  if (auto s = root.section("sweep")) {
    s->read("heads", c.sweep_heads);
    s->finish();
  }
  if (auto o = root.section("output")) {
    o->read("dir", c.output_dir);
    o->finish();
  }
  root.finish();
  c.pretrain.seed = c.seed;
  c.ranker.seed = c.seed;
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path,
                                        const std::optional<std::string>& preset,
                                        const std::optional<std::uint64_t>& seed) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("config", "cannot open config file '" + path + "'");
  }
  json document;
  try {
    document = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", std::string("invalid JSON: ") + e.what());
  }
  return parse_experiment_config(document, preset, seed);
}

nlohmann::json to_json(const PretrainConfig& c) {
  return {{"model", to_string(c.kind)},
          {"heads", c.heads},
          {"hidden_dim", c.hidden_dim},
          {"input_dim", c.input_dim},
          {"keep_probability", c.keep_probability},
          {"penalty", c.penalty},
          {"epsilon", c.epsilon},
          {"penalty_mode", to_string(c.penalty_mode)},
          {"pairs", to_string(c.pairs)},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"seed", c.seed}};
}

nlohmann::json to_json(const RankerConfig& c) {
  return {{"hidden", c.hidden},
          {"integration", to_string(c.integration)},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"train_embeddings", c.train_embeddings},
          {"seed", c.seed}};
}

PretrainConfig pretrain_config_from_json(const nlohmann::json& j) {
  PretrainConfig c;
  Section s(j, "pretrain");
  prefixed("pretrain", [&] { read_pretrain(s, c, true); });
  return c;
}

RankerConfig ranker_config_from_json(const nlohmann::json& j) {
  RankerConfig c;
  Section s(j, "ranker");
  prefixed("ranker", [&] { read_ranker(s, c, true); });
  return c;
}

nlohmann::json to_json(const ExperimentConfig& c) {
  json pretrain = to_json(c.pretrain);
  pretrain.erase("input_dim");
  pretrain.erase("seed");
  json ranker = to_json(c.ranker);
  ranker.erase("seed");
  json split = {{"strategy", to_string(c.data.split.kind)}};
  switch (c.data.split.kind) {
    case SplitKind::ratio:
      split["fraction"] = c.data.split.fraction;
      break;
    case SplitKind::leave_one_out:
      break;
    case SplitKind::time_cutoff:
      split["cutoff"] = c.data.split.cutoff;
      split["train_window"] = c.data.split.train_window;
      split["test_window"] = c.data.split.test_window;
      split["pretrain_window"] = c.data.split.pretrain_window;
      break;
  }
  json out = {{"seed", c.seed},
              {"data",
               {{"path", c.data.path},
                {"rating_scale", {c.data.implicit.scale_min, c.data.implicit.scale_max}},
                {"positive_threshold", c.data.implicit.positive_threshold},
                {"min_reviews", c.data.implicit.min_reviews},
                {"split", split},
                {"train_negatives", c.data.train_negatives}}},
              {"embedding", {{"dim", c.embedding_dim}}},
              {"pretrain", pretrain},
              {"ranker", ranker},
              {"eval", {{"k", c.eval.k}, {"negatives", c.eval.negatives}}},
              {"analysis", {{"samples", c.analysis.samples}}},
              {"ablation", {{"groups", c.ablation_groups}}},
              {"sweep", {{"heads", c.sweep_heads}}},
              {"output", {{"dir", c.output_dir}}}};
  if (!c.preset.empty()) {
    out["preset"] = c.preset;
  }
  return out;
}

}  // namespace ctxrec
