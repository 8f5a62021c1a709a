#include <fstream>

#include "ctxrec/config.hpp"
#include "ctxrec/error.hpp"
#include "doctest.h"

using namespace ctxrec;
using nlohmann::json;

namespace {

std::string failing_field(const json& doc, std::optional<std::string> preset = std::nullopt,
                          std::optional<std::uint64_t> seed = std::nullopt) {
  try {
    parse_experiment_config(doc, preset, seed);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

json minimal() { return {{"seed", 7}, {"data", {{"path", "x.tsv"}}}}; }

}  // namespace

TEST_CASE("minimal config takes defaults") {
  const auto c = parse_experiment_config(minimal());
  CHECK(c.seed == 7);
  CHECK(c.pretrain.seed == 7);
  CHECK(c.ranker.seed == 7);
  CHECK(c.data.path == "x.tsv");
  CHECK(c.eval.k == std::vector<std::size_t>{5, 10});
  CHECK(c.eval.negatives == 50);
}

TEST_CASE("seed is required unless overridden") {
  json doc = minimal();
  doc.erase("seed");
  CHECK(failing_field(doc) == "seed");
  CHECK(parse_experiment_config(doc, std::nullopt, 11).seed == 11);
  CHECK(parse_experiment_config(minimal(), std::nullopt, 11).seed == 11);
}

TEST_CASE("unknown keys are rejected with their path") {
  json doc = minimal();
  doc["pretrain"] = {{"headz", 4}};
  CHECK(failing_field(doc) == "pretrain.headz");
  doc = minimal();
  doc["extra"] = 1;
  CHECK(failing_field(doc) == "extra");
  doc = minimal();
  doc["data"]["split"] = {{"strategy", "ratio"}, {"frac", 0.5}};
  CHECK(failing_field(doc) == "data.split.frac");
}

TEST_CASE("invalid values name the field") {
  json doc = minimal();
  doc["pretrain"] = {{"heads", 3}, {"hidden_dim", 8}};
  CHECK(failing_field(doc) == "pretrain.hidden_dim");
  doc = minimal();
  doc["pretrain"] = {{"model", "gan"}};
  CHECK(failing_field(doc).rfind("pretrain", 0) == 0);
  doc = minimal();
  doc["data"]["split"] = {{"strategy", "time_cutoff"}};
  CHECK(failing_field(doc) == "data.split.cutoff");
  doc = minimal();
  doc["eval"] = {{"k", {0}}};
  CHECK(failing_field(doc) == "eval.k");
  doc = minimal();
  doc["embedding"] = {{"dim", "wide"}};
  CHECK(failing_field(doc) == "embedding.dim");
  doc = minimal();
  doc["data"].erase("path");
  CHECK(failing_field(doc) == "data.path");
  CHECK(failing_field(minimal(), std::string("imagenet-like")) == "preset");
}

TEST_CASE("presets merge under the document") {
  for (const auto& name : preset_names()) {
    CHECK(preset_json(name).is_object());
  }
  json doc = minimal();
  doc["data"]["split"] = {{"strategy", "time_cutoff"}, {"cutoff", 1000000}};
  const auto ctr = parse_experiment_config(doc, std::string("ctr-like"));
  CHECK(ctr.pretrain.heads == 8);
  CHECK(ctr.pretrain.hidden_dim == 256);
  CHECK(ctr.ranker.hidden == std::vector<std::size_t>{512, 256, 256});
  CHECK(ctr.ranker.integration == IntegrationMode::feature_based);
  CHECK(ctr.pretrain.penalty == 0.05);

  doc = minimal();
  doc["preset"] = "yelp-like";
  doc["pretrain"] = {{"hidden_dim", 128}};
  const auto yelp = parse_experiment_config(doc);
  CHECK(yelp.pretrain.heads == 4);
  CHECK(yelp.pretrain.hidden_dim == 128);
  CHECK(yelp.pretrain.penalty == 0.005);
  CHECK(yelp.ranker.integration == IntegrationMode::fine_tune);
  CHECK(yelp.data.implicit.min_reviews == 20);

  const auto dian = parse_experiment_config(minimal(), std::string("dianping-like"));
  CHECK(dian.data.split.kind == SplitKind::leave_one_out);
  CHECK(dian.pretrain.hidden_dim == 128);
}

TEST_CASE("config snapshot round trip") {
  json doc = minimal();
  doc["pretrain"] = {{"model", "vae"}, {"heads", 2}, {"hidden_dim", 16}, {"penalty_mode", "hinge"}};
  doc["ranker"] = {{"hidden", {32, 16}}, {"integration", "feature_based"}};
  doc["eval"] = {{"k", {3}}, {"negatives", 20}};
  const auto c = parse_experiment_config(doc, std::string("yelp-like"));
  const json snap = to_json(c);
  const auto again = parse_experiment_config(snap);
  CHECK(to_json(again) == snap);
  CHECK(again.pretrain == c.pretrain);
  CHECK(again.ranker == c.ranker);
  CHECK(pretrain_config_from_json(to_json(c.pretrain)) == c.pretrain);
  CHECK(ranker_config_from_json(to_json(c.ranker)) == c.ranker);
}

TEST_CASE("load_experiment_config reports unreadable files") {
  try {
    load_experiment_config("/nonexistent/config.json");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "config");
  }
  const auto path = std::filesystem::temp_directory_path() / "ctxrec_bad_config.json";
  std::ofstream(path) << "{ not json";
  CHECK_THROWS_AS(load_experiment_config(path.string()), ConfigError);
  std::ofstream(path) << minimal().dump();
  CHECK(load_experiment_config(path.string()).seed == 7);
  std::filesystem::remove(path);
}
