#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "ctxrec/checkpoint.hpp"
#include "ctxrec/config.hpp"
#include "ctxrec/error.hpp"
#include "ctxrec/pipeline.hpp"
#include "ctxrec/synthetic.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace ctxrec;

namespace {

struct CommonOptions {
  std::string config_path;
  std::string output;
  std::optional<std::uint64_t> seed;
  std::string preset;
};

std::string real(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string brief(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
  if (!out) {
    throw DataError("cannot write '" + path.string() + "'");
  }
}

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') {
      out.push_back('\\');
    }
    out.push_back(c == '\n' ? ' ' : c);
  }
  return out + "\"";
}

class Run {
 public:
  explicit Run(const CommonOptions& opts) {
    config_ = load_experiment_config(
        opts.config_path, opts.preset.empty() ? std::nullopt : std::optional(opts.preset),
        opts.seed);
    if (!opts.output.empty()) {
      config_.output_dir = opts.output;
    } else if (const char* env = std::getenv("CTXREC_OUTPUT_DIR"); env && *env) {
      config_.output_dir = env;
    }
    out_ = config_.output_dir;
    std::error_code ec;
    fs::create_directories(out_, ec);
    if (ec) {
      throw ConfigError("output.dir", "cannot create output directory '" + out_.string() +
                                          "': " + ec.message());
    }
    snapshot_ = to_json(config_);
    write_file(out_ / "config.snapshot.json", snapshot_.dump(2) + "\n");
  }

  const ExperimentConfig& config() const { return config_; }
  const json& snapshot() const { return snapshot_; }
  fs::path path(const std::string& name) const { return out_ / name; }

  const Dataset& dataset() {
    if (!dataset_) {
      dataset_ = load_dataset(config_);
    }
    return *dataset_;
  }

  std::string dataset_name() const { return fs::path(config_.data.path).stem().string(); }

  std::string model_id(const RankerConfig& rc, const PretrainConfig* pc) const {
    if (rc.integration == IntegrationMode::none || pc == nullptr) {
      return "base";
    }
    return "base+" + to_string(pc->kind) + "-k" + std::to_string(pc->heads) + "-" +
           to_string(rc.integration);
  }

  Checkpoint require_checkpoint(const std::string& name, const std::string& producer) const {
    const fs::path p = path(name);
    if (!fs::exists(p)) {
      throw DataError("missing " + p.string() + " (run `ctxrec " + producer + "` first)");
    }
    return load_checkpoint(p);
  }

 private:
  ExperimentConfig config_;
  fs::path out_;
  json snapshot_;
  std::optional<Dataset> dataset_;
};

void write_metrics(Run& run, const EvaluationReport& report, const std::string& model_id,
                   const std::string& stem) {
  std::ostringstream csv;
  csv << "model_id,dataset,metric,k,value,seed\n";
  json rows = json::array();
  for (const auto& m : report.metrics) {
    const std::string name = m.k ? m.metric + "@" + std::to_string(m.k) : m.metric;
    csv << model_id << ',' << run.dataset_name() << ',' << name << ',' << m.k << ','
        << real(m.value) << ',' << run.config().seed << '\n';
    rows.push_back({{"model_id", model_id},
                    {"dataset", run.dataset_name()},
                    {"metric", name},
                    {"k", m.k},
                    {"value", m.value},
                    {"seed", run.config().seed}});
  }
  write_file(run.path(stem + ".csv"), csv.str());
  json doc = {{"config", run.snapshot()},
              {"metrics", rows},
              {"lists", report.lists},
              {"auc_positives", report.auc_positives},
              {"auc_negatives", report.auc_negatives}};
  write_file(run.path(stem + ".json"), doc.dump(2) + "\n");
}

int cmd_ingest(Run& run) {
  const Dataset& ds = run.dataset();
  json doc = json::parse(dataset_manifest_json(ds, run.config().seed));
  doc["config"] = run.snapshot();
  write_file(run.path("dataset.manifest.json"), doc.dump(2) + "\n");
  std::cout << "ingested " << ds.table.rows.size() << " rows: " << ds.users.size() << " users, "
            << ds.items.size() << " items, " << ds.train.size() << " train, " << ds.test.size()
            << " test, " << ds.pretrain.size() << " pretrain\n";
  return 0;
}

int cmd_pretrain(Run& run) {
  const Dataset& ds = run.dataset();
  const PretrainBundle bundle = run_pretrain(ds, run.config());
  const Checkpoint ck = make_pretrain_checkpoint(bundle, ds, run.config());
  save_checkpoint(run.path("pretrain.ckpt"), ck);
  std::ostringstream csv;
  csv << "epoch,reconstruction,kl,penalty,total\n";
  for (const auto& e : bundle.trace) {
    csv << e.epoch << ',' << real(e.loss.reconstruction) << ',' << real(e.loss.kl) << ','
        << real(e.loss.penalty) << ',' << real(e.loss.total) << '\n';
  }
  write_file(run.path("pretrain_loss.csv"), csv.str());
  std::cout << "pretrained " << to_string(bundle.model.kind()) << " on " << ds.pretrain.size()
            << " examples; checksum " << std::hex << std::setw(8) << std::setfill('0')
            << checkpoint_checksum(ck) << std::dec << '\n';
  return 0;
}

int cmd_train(Run& run) {
  const Dataset& ds = run.dataset();
  std::optional<PretrainBundle> bundle;
  if (run.config().ranker.integration != IntegrationMode::none) {
    bundle = restore_pretrain(run.require_checkpoint("pretrain.ckpt", "pretrain"), ds);
  }
  const RankerResult result = run_ranker(ds, run.config(), bundle ? &*bundle : nullptr);
  const Checkpoint ck = make_ranker_checkpoint(result.model, ds, run.config());
  save_checkpoint(run.path("ranker.ckpt"), ck);
  std::ostringstream csv;
  csv << "epoch,loss\n";
  for (std::size_t e = 0; e < result.trace.size(); ++e) {
    csv << e + 1 << ',' << real(result.trace[e]) << '\n';
  }
  write_file(run.path("ranker_loss.csv"), csv.str());
  std::cout << "trained ranker (" << to_string(run.config().ranker.integration)
            << "); final loss " << brief(result.trace.back()) << '\n';
  return 0;
}

int cmd_evaluate(Run& run) {
  const Dataset& ds = run.dataset();
  const RankerModel model = restore_ranker(run.require_checkpoint("ranker.ckpt", "train"), ds);
  const EvaluationReport report = evaluate_ranking(model, ds, run.config().eval, run.config().seed);
  const PretrainConfig* pc = model.has_pretrained() ? &model.pretrained().config() : nullptr;
  write_metrics(run, report, run.model_id(model.config(), pc), "metrics");
  std::ostringstream pred;
  pred << "example_id,score\n";
  for (std::size_t row : ds.test) {
    pred << row << ',' << real(score_example(model, ds.example(row))) << '\n';
  }
  write_file(run.path("predictions.csv"), pred.str());
  for (const auto& m : report.metrics) {
    std::cout << (m.k ? m.metric + "@" + std::to_string(m.k) : m.metric) << ' ' << brief(m.value)
              << '\n';
  }
  return 0;
}

int cmd_analyze(Run& run) {
  const Dataset& ds = run.dataset();
  const PretrainBundle bundle =
      restore_pretrain(run.require_checkpoint("pretrain.ckpt", "pretrain"), ds);
  auto inputs = pretrain_inputs(ds, bundle.features);
  inputs.resize(std::min(inputs.size(), run.config().analysis.samples));
  if (inputs.empty()) {
    throw DataError("no pre-training inputs to analyze");
  }
  std::vector<Vector> hidden;
  std::ostringstream states;
  states << "example";
  for (std::size_t j = 0; j < bundle.model.config().hidden_dim; ++j) {
    states << ",h" << j;
  }
  states << '\n';
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    hidden.push_back(extract_representation(bundle.model, inputs[i]).values);
    states << ds.pretrain[i];
    for (double v : hidden.back()) {
      states << ',' << real(v);
    }
    states << '\n';
  }
  write_file(run.path("hidden_states.csv"), states.str());
  const Moments moments = hidden_moments(hidden);
  json doc = {{"config", run.snapshot()},
              {"model", to_string(bundle.model.kind())},
              {"heads", bundle.model.config().heads},
              {"samples", inputs.size()},
              {"mean_of_means", moments.mean},
              {"mean_of_variances", moments.variance},
              {"mean_cosine", nullptr},
              {"cosine_matrix", nullptr}};
  if (bundle.model.config().heads >= 2) {
    const AnalysisReport report = head_cosine_stats(bundle.model, inputs);
    doc["mean_cosine"] = report.mean_cosine;
    json matrix = json::array();
    for (std::size_t i = 0; i < report.cosine.rows(); ++i) {
      const auto r = report.cosine.row(i);
      matrix.push_back(std::vector<double>(r.begin(), r.end()));
    }
    doc["cosine_matrix"] = matrix;
    std::cout << "mean inter-head cosine " << brief(report.mean_cosine) << '\n';
  }
  write_file(run.path("analysis.json"), doc.dump(2) + "\n");
  std::cout << "hidden mean " << brief(moments.mean) << " variance " << brief(moments.variance)
            << '\n';
  return 0;
}

int cmd_ablate(Run& run) {
  const auto rows = run_ablation(run.dataset(), run.config());
  std::ostringstream csv;
  csv << "group,full_auc,ablated_auc,delta_auc,seed\n";
  json items = json::array();
  for (const auto& r : rows) {
    csv << r.group << ',' << real(r.full_auc) << ',' << real(r.ablated_auc) << ','
        << real(r.delta) << ',' << run.config().seed << '\n';
    items.push_back({{"group", r.group},
                     {"full_auc", r.full_auc},
                     {"ablated_auc", r.ablated_auc},
                     {"delta_auc", r.delta}});
    std::cout << r.group << " delta_auc " << brief(r.delta) << '\n';
  }
  write_file(run.path("ablation.csv"), csv.str());
  write_file(run.path("ablation.json"),
             json({{"config", run.snapshot()}, {"ablation", items}}).dump(2) + "\n");
  return 0;
}

int cmd_sweep(Run& run) {
  const auto rows = run_sweep(run.dataset(), run.config());
  std::ostringstream csv;
  csv << "heads";
  for (std::size_t k : run.config().eval.k) {
    csv << ",ndcg@" << k;
  }
  csv << ",auc,mean_cosine,seed\n";
  json items = json::array();
  for (const auto& r : rows) {
    csv << r.heads;
    json item = {{"heads", r.heads}};
    for (std::size_t k : run.config().eval.k) {
      const double v = r.metrics.value("ndcg", k);
      csv << ',' << real(v);
      item["ndcg@" + std::to_string(k)] = v;
    }
    const double a = r.metrics.value("auc");
    csv << ',' << real(a) << ',' << (r.mean_cosine ? real(*r.mean_cosine) : "") << ','
        << run.config().seed << '\n';
    item["auc"] = a;
    item["mean_cosine"] = r.mean_cosine ? json(*r.mean_cosine) : json(nullptr);
    items.push_back(item);
    std::cout << "K=" << r.heads << " auc " << brief(a) << '\n';
  }
  write_file(run.path("sweep.csv"), csv.str());
  write_file(run.path("sweep.json"),
             json({{"config", run.snapshot()}, {"sweep", items}}).dump(2) + "\n");
  return 0;
}

int report(const Error& e) {
  std::cerr << "error kind=" << e.kind();
  if (const auto* c = dynamic_cast<const ConfigError*>(&e)) {
    std::cerr << " field=" << c->field();
  }
  std::cerr << " msg=" << quoted(e.what()) << '\n';
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const DimensionError*>(&e)) {
    return 2;
  }
  if (dynamic_cast<const DataError*>(&e)) {
    return 3;
  }
  if (dynamic_cast<const NumericError*>(&e)) {
    return 4;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Implicit-context pre-training and Wide&Deep ranking"};
  app.require_subcommand(1);
  CommonOptions opts;
  std::uint64_t seed_value = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config_path, "Experiment config (JSON)")->required();
    sub->add_option("--output", opts.output, "Output directory (overrides config and env)");
    sub->add_option("--seed", seed_value, "Master seed (overrides config)");
    sub->add_option("--preset", opts.preset, "yelp-like | dianping-like | ctr-like");
  };

  using Handler = int (*)(Run&);
  const std::vector<std::pair<const char*, std::pair<const char*, Handler>>> commands = {
      {"ingest", {"Validate the data file and write the dataset manifest", cmd_ingest}},
      {"pretrain", {"Pre-train the representation model", cmd_pretrain}},
      {"train", {"Train the ranker", cmd_train}},
      {"evaluate", {"Compute NDCG@k and AUC on the test split", cmd_evaluate}},
      {"analyze", {"Head cosine statistics and hidden-state moments", cmd_analyze}},
      {"ablate", {"Leave-one-feature-out AUC importance", cmd_ablate}},
      {"sweep", {"Full experiment for every head count in sweep.heads", cmd_sweep}},
  };
  std::vector<std::pair<CLI::App*, Handler>> handlers;
  for (const auto& [name, entry] : commands) {
    CLI::App* sub = app.add_subcommand(name, entry.first);
    add_common(sub);
    handlers.emplace_back(sub, entry.second);
  }

  SyntheticSpec spec;
  std::string synth_out;
  CLI::App* synth = app.add_subcommand("synth", "Write a planted-regime synthetic TSV");
  synth->add_option("--output", synth_out, "Output directory")->required();
  synth->add_option("--seed", spec.seed, "Generator seed");
  synth->add_option("--users", spec.users, "Number of users");
  synth->add_option("--items", spec.items, "Number of items");
  synth->add_option("--regimes", spec.regimes, "Number of hidden regimes");
  synth->add_option("--per-user", spec.interactions_per_user, "Interactions per user");
  synth->add_option("--user-types", spec.user_types,
                    "Shared preference patterns (0: one per user)");
  synth->add_option("--signal-columns", spec.signal_columns, "Noisy regime indicator columns");
  synth->add_option("--signal-noise", spec.signal_noise, "Noise scale of the indicator columns");
  synth->add_option("--fidelity", spec.context_fidelity,
                    "Probability that c.weekday equals the regime");
  synth->add_option("--label-noise", spec.label_noise, "Probability of flipping a label");
  synth->add_flag("--stars", spec.star_ratings, "Emit 1-5 star ratings instead of labels");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error kind=usage msg=" << quoted(e.what()) << '\n';
    return 2;
  }

  try {
    if (*synth) {
      fs::create_directories(synth_out);
      std::ostringstream tsv;
      write_tsv(tsv, make_planted_regimes(spec));
      write_file(fs::path(synth_out) / "synthetic.tsv", tsv.str());
      std::cout << (fs::path(synth_out) / "synthetic.tsv").string() << '\n';
      return 0;
    }
    for (const auto& [sub, handler] : handlers) {
      if (*sub) {
        if (sub->count("--seed") > 0) {
          opts.seed = seed_value;
        }
        Run run(opts);
        return handler(run);
      }
    }
  } catch (const Error& e) {
    return report(e);
  } catch (const std::exception& e) {
    std::cerr << "error kind=internal msg=" << quoted(e.what()) << '\n';
    return 1;
  }
  return 1;
}
