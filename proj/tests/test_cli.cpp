#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Workspace {
 public:
  Workspace() : root_(fs::temp_directory_path() / ("ctxrec_cli_" + std::to_string(::getpid()))) {
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  ~Workspace() { fs::remove_all(root_); }

  const fs::path& root() const { return root_; }

  Outcome run(const std::string& args) const {
    const fs::path err = root_ / "stderr.txt";
    const std::string cmd = std::string(CTXREC_CLI) + " " + args + " > " +
                            (root_ / "stdout.txt").string() + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
  }

  fs::path write_config(const std::string& name, const nlohmann::json& doc) const {
    const fs::path p = root_ / name;
    std::ofstream(p) << doc.dump(2);
    return p;
  }

 private:
  fs::path root_;
};

nlohmann::json base_config(const fs::path& data) {
  return {
      {"seed", 5},
      {"data", {{"path", data.string()}, {"min_reviews", 0}}},
      {"embedding", {{"dim", 4}}},
      {"pretrain", {{"model", "macdae"}, {"heads", 2}, {"hidden_dim", 8}, {"epochs", 2}}},
      {"ranker", {{"hidden", {8}}, {"integration", "fine_tune"}, {"epochs", 2}}},
      {"eval", {{"negatives", 10}}},
  };
}

}  // namespace

TEST_CASE("cli pipeline end to end") {
  Workspace ws;
  REQUIRE(ws.run("synth --output " + (ws.root() / "data").string() +
                 " --seed 3 --users 12 --items 60 --per-user 10")
              .code == 0);
  const fs::path data = ws.root() / "data" / "synthetic.tsv";
  REQUIRE(fs::exists(data));
  const fs::path cfg = ws.write_config("cfg.json", base_config(data));
  const fs::path out = ws.root() / "out";
  const std::string common = " --config " + cfg.string() + " --output " + out.string();

  SUBCASE("happy path and reproducibility") {
    for (const char* cmd : {"ingest", "pretrain", "train", "evaluate", "analyze"}) {
      CAPTURE(cmd);
      const Outcome o = ws.run(std::string(cmd) + common);
      CHECK(o.code == 0);
      CHECK(o.err.find("error") == std::string::npos);
    }
    for (const char* f : {"dataset.manifest.json", "pretrain.ckpt", "pretrain_loss.csv",
                          "ranker.ckpt", "ranker_loss.csv", "metrics.csv", "metrics.json",
                          "predictions.csv", "analysis.json", "hidden_states.csv",
                          "config.snapshot.json"}) {
      CAPTURE(f);
      CHECK(fs::exists(out / f));
    }
    const std::string metrics = slurp(out / "metrics.csv");
    CHECK(metrics.find(",ndcg@5,") != std::string::npos);
    CHECK(metrics.find(",ndcg@10,") != std::string::npos);
    CHECK(metrics.find(",auc,") != std::string::npos);
    const auto snapshot = nlohmann::json::parse(slurp(out / "config.snapshot.json"));
    CHECK(snapshot["seed"] == 5);

    std::map<std::string, std::string> first;
    const char* artifacts[] = {"pretrain.ckpt", "ranker.ckpt", "metrics.csv", "predictions.csv"};
    for (const char* f : artifacts) first[f] = slurp(out / f);
    for (const char* cmd : {"pretrain", "train", "evaluate"}) {
      CHECK(ws.run(std::string(cmd) + common).code == 0);
    }
    for (const char* f : artifacts) {
      CAPTURE(f);
      CHECK(slurp(out / f) == first[f]);
    }
  }

  SUBCASE("config errors exit 2 and name the field") {
    auto doc = base_config(data);
    doc.erase("seed");
    const Outcome o = ws.run("pretrain --config " + ws.write_config("noseed.json", doc).string() +
                             " --output " + out.string());
    CHECK(o.code == 2);
    CHECK(o.err.find("kind=config") != std::string::npos);
    CHECK(o.err.find("field=seed") != std::string::npos);
    CHECK(ws.run("pretrain --config " + ws.write_config("noseed.json", doc).string() +
                 " --seed 4 --output " + out.string())
              .code == 0);

    doc = base_config(data);
    doc["ranker"]["hiden"] = {4};
    CHECK(ws.run("train --config " + ws.write_config("typo.json", doc).string()).code == 2);
    CHECK(ws.run("train").code == 2);
    CHECK(ws.run("evaluate --config " + cfg.string() + " --preset nope").code == 2);
  }

  SUBCASE("data errors exit 3") {
    CHECK(ws.run("evaluate" + common).code == 3);
    const fs::path bad = ws.root() / "bad.tsv";
    std::ofstream(bad) << "user_id\titem_id\tlabel\n1\t2\t7\n";
    const Outcome o = ws.run("ingest --config " +
                             ws.write_config("bad.json", base_config(bad)).string() +
                             " --output " + out.string());
    CHECK(o.code == 3);
    CHECK(o.err.find("kind=data") != std::string::npos);
  }

  SUBCASE("output directory from the environment") {
    const fs::path env_out = ws.root() / "env_out";
    const std::string cmd = "env CTXREC_OUTPUT_DIR=" + env_out.string() + " " + CTXREC_CLI +
                            " ingest --config " + cfg.string() + " > /dev/null 2>&1";
    CHECK(std::system(cmd.c_str()) == 0);
    CHECK(fs::exists(env_out / "dataset.manifest.json"));
  }
}
