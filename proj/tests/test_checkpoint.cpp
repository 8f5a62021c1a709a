#include <cstring>

#include "ctxrec/checkpoint.hpp"
#include "ctxrec/config.hpp"
#include "ctxrec/error.hpp"
#include "ctxrec/pipeline.hpp"
#include "ctxrec/synthetic.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace ctxrec;

namespace {

ExperimentConfig tiny_config(std::uint64_t seed) {
  nlohmann::json doc = {
      {"seed", seed},
      {"data", {{"path", "unused.tsv"}, {"min_reviews", 0}}},
      {"embedding", {{"dim", 4}}},
      {"pretrain", {{"model", "macdae"}, {"heads", 2}, {"hidden_dim", 8}, {"epochs", 2}}},
      {"ranker", {{"hidden", {8}}, {"integration", "fine_tune"}, {"epochs", 2}}},
      {"eval", {{"negatives", 5}}},
  };
  return parse_experiment_config(doc);
}

Dataset tiny_dataset(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.users = 10;
  spec.items = 40;
  spec.interactions_per_user = 8;
  spec.seed = seed;
  return prepare_dataset(make_planted_regimes(spec), tiny_config(seed));
}

bool bit_identical(const TensorList& a, const TensorList& b) {
  const auto fa = testing::flatten(a);
  const auto fb = testing::flatten(b);
  return fa.size() == fb.size() &&
         std::memcmp(fa.data(), fb.data(), fa.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("checkpoint serialization round trip") {
  std::mt19937_64 gen(1);
  Checkpoint c;
  c.kind = "test";
  c.config_json = R"({"a":1})";
  c.tensors.push_back({"x", Matrix(2, 3, testing::random_vector(6, gen, -1e3, 1e3))});
  c.tensors.push_back({"y", Matrix(1, 1, Vector{-0.0})});
  c.tensors.push_back({"empty", Matrix(0, 0)});
  const std::string bytes = serialize_checkpoint(c);
  const Checkpoint back = deserialize_checkpoint(bytes);
  CHECK(back.kind == "test");
  CHECK(back.config_json == c.config_json);
  CHECK(bit_identical(back.tensors, c.tensors));
  CHECK(std::signbit(back.tensors[1].value(0, 0)));
  CHECK(serialize_checkpoint(back) == bytes);
  CHECK(checkpoint_checksum(c) == checkpoint_checksum(back));
  CHECK(bytes.substr(0, 8) == "CTXRCKPT");
}

TEST_CASE("checkpoint corruption is detected") {
  Checkpoint c;
  c.kind = "test";
  c.config_json = "{}";
  c.tensors.push_back({"x", Matrix(4, 4, Vector(16, 0.25))});
  const std::string bytes = serialize_checkpoint(c);
  for (std::size_t pos = 0; pos < bytes.size(); pos += 7) {
    std::string bad = bytes;
    bad[pos] = static_cast<char>(bad[pos] ^ 0x10);
    CHECK_THROWS_AS(deserialize_checkpoint(bad), DataError);
  }
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 1)), DataError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes + "x"), DataError);
  CHECK_THROWS_AS(deserialize_checkpoint(""), DataError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/model.ckpt"), DataError);
}

TEST_CASE("crc32 matches the standard check value") {
  CHECK(crc32_hex("123456789") == "cbf43926");
}

TEST_CASE("pipeline checkpoints restore bit-identical models") {
  const Dataset ds = tiny_dataset(3);
  const ExperimentConfig cfg = tiny_config(3);
  const PretrainBundle bundle = run_pretrain(ds, cfg);
  const Checkpoint pc = make_pretrain_checkpoint(bundle, ds, cfg);
  const auto dir = std::filesystem::temp_directory_path() / "ctxrec_ckpt_test";
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / "p.ckpt", pc);
  const PretrainBundle restored = restore_pretrain(load_checkpoint(dir / "p.ckpt"), ds);
  CHECK(bit_identical(restored.model.parameters(), bundle.model.parameters()));
  CHECK(restored.model.config() == bundle.model.config());
  CHECK(restored.features == bundle.features);

  const RankerResult ranker = run_ranker(ds, cfg, &bundle);
  const Checkpoint rc = make_ranker_checkpoint(ranker.model, ds, cfg);
  save_checkpoint(dir / "r.ckpt", rc);
  const RankerModel back = restore_ranker(load_checkpoint(dir / "r.ckpt"), ds);
  CHECK(back == ranker.model);
  CHECK(bit_identical(back.parameters(), ranker.model.parameters()));

  CHECK_THROWS_AS(restore_ranker(pc, ds), DataError);
  CHECK_THROWS_AS(restore_pretrain(rc, ds), DataError);
  const Dataset other = ds.without_feature("d.noise");
  CHECK_THROWS_AS(restore_pretrain(pc, other), DataError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("pipeline runs are reproducible") {
  const Dataset ds = tiny_dataset(4);
  const ExperimentConfig cfg = tiny_config(4);
  const auto a = run_experiment(ds, cfg);
  const auto b = run_experiment(ds, cfg);
  CHECK(checkpoint_checksum(make_ranker_checkpoint(a.ranker.model, ds, cfg)) ==
        checkpoint_checksum(make_ranker_checkpoint(b.ranker.model, ds, cfg)));
  CHECK(a.metrics.value("auc") == b.metrics.value("auc"));
}
