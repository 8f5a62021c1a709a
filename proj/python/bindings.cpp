#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "ctxrec/config.hpp"
#include "ctxrec/error.hpp"
#include "ctxrec/eval.hpp"
#include "ctxrec/pipeline.hpp"
#include "ctxrec/pretrain.hpp"
#include "ctxrec/synthetic.hpp"

namespace py = pybind11;
using namespace ctxrec;

namespace {

Matrix to_matrix(const std::vector<Vector>& rows) {
  if (rows.empty()) {
    throw DimensionError("expected at least one row");
  }
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols()) {
      throw DimensionError("ragged rows");
    }
    for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = rows[r][c];
  }
  return m;
}

std::vector<Vector> to_rows(const Matrix& m) {
  std::vector<Vector> out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    out[r].assign(row.begin(), row.end());
  }
  return out;
}

py::dict loss_dict(const PretrainLossReport& l) {
  py::dict d;
  d["reconstruction"] = l.reconstruction;
  d["kl"] = l.kl;
  d["penalty"] = l.penalty;
  d["total"] = l.total;
  return d;
}

nlohmann::json parse_document(const std::string& text) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config", std::string("invalid JSON: ") + e.what());
  }
}

struct FittedPretrain {
  PretrainModel model;
  std::vector<EpochLoss> trace;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Context-aware pre-training for ranking: core operations.";

  static py::exception<Error> base(m, "Error", PyExc_RuntimeError);
  static py::exception<DimensionError> dimension(m, "DimensionError", base.ptr());
  static py::exception<NumericError> numeric(m, "NumericError", base.ptr());
  static py::exception<ConfigError> config(m, "ConfigError", base.ptr());
  static py::exception<DataError> data(m, "DataError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      py::object inst = py::reinterpret_borrow<py::object>(config.ptr())(e.what());
      inst.attr("field") = e.field();
      PyErr_SetObject(config.ptr(), inst.ptr());
    } catch (const DimensionError& e) {
      dimension(e.what());
    } catch (const NumericError& e) {
      numeric(e.what());
    } catch (const DataError& e) {
      data(e.what());
    }
  });

  m.def("softmax", [](const Vector& z) { return softmax(z); }, py::arg("logits"));
  m.def("cosine_similarity", [](const Vector& a, const Vector& b) { return cosine_similarity(a, b); },
        py::arg("a"), py::arg("b"));
  m.def("gaussian_kl", [](const Vector& mu, const Vector& lv) { return gaussian_kl(mu, lv); },
        py::arg("mean"), py::arg("logvar"));
  m.def(
      "similarity_penalty",
      [](const std::vector<Vector>& heads, double lambda, double epsilon, const std::string& mode,
         const std::string& pairs) {
        return similarity_penalty(to_matrix(heads), lambda, epsilon, parse_penalty_mode(mode),
                                  parse_pair_convention(pairs));
      },
      py::arg("heads"), py::arg("penalty"), py::arg("epsilon") = 0.75, py::arg("mode") = "raw",
      py::arg("pairs") = "unordered");

  m.def(
      "ndcg_at_k",
      [](const Vector& scores, const std::vector<int>& relevance, std::size_t k) {
        if (scores.size() != relevance.size()) {
          throw DimensionError("scores and relevance differ in length");
        }
        std::vector<RankedEntry> entries;
        for (std::size_t i = 0; i < scores.size(); ++i) {
          entries.push_back({i, scores[i], relevance[i]});
        }
        return ndcg_at_k(RankedList(std::move(entries)), k);
      },
      py::arg("scores"), py::arg("relevance"), py::arg("k"),
      "Items are identified by position; ties break toward the earlier position.");
  m.def("auc", [](const Vector& pos, const Vector& neg) { return auc(pos, neg); },
        py::arg("positive"), py::arg("negative"));
  m.def(
      "hidden_moments",
      [](const std::vector<Vector>& vectors) {
        const Moments mo = hidden_moments(vectors);
        return py::make_tuple(mo.mean, mo.variance);
      },
      py::arg("vectors"));

  m.def(
      "synthetic_tsv",
      [](std::size_t users, std::size_t items, std::size_t regimes, std::size_t per_user,
         std::size_t user_types, std::size_t signal_columns, double label_noise,
         bool star_ratings, std::uint64_t seed) {
        SyntheticSpec spec;
        spec.users = users;
        spec.items = items;
        spec.regimes = regimes;
        spec.interactions_per_user = per_user;
        spec.user_types = user_types;
        spec.signal_columns = signal_columns;
        spec.label_noise = label_noise;
        spec.star_ratings = star_ratings;
        spec.seed = seed;
        std::ostringstream out;
        write_tsv(out, make_planted_regimes(spec));
        return out.str();
      },
      py::arg("users") = 50, py::arg("items") = 200, py::arg("regimes") = 4,
      py::arg("per_user") = 40, py::arg("user_types") = 0, py::arg("signal_columns") = 0,
      py::arg("label_noise") = 0.0, py::arg("star_ratings") = false, py::arg("seed") = 0);

  py::class_<FittedPretrain>(m, "PretrainModel")
      .def_property_readonly("kind", [](const FittedPretrain& f) { return to_string(f.model.kind()); })
      .def_property_readonly("heads", [](const FittedPretrain& f) { return f.model.config().heads; })
      .def_property_readonly("loss_trace",
                             [](const FittedPretrain& f) {
                               py::list out;
                               for (const auto& e : f.trace) out.append(loss_dict(e.loss));
                               return out;
                             })
      .def("parameters",
           [](const FittedPretrain& f) {
             py::dict out;
             for (const auto& t : f.model.parameters()) out[py::str(t.name)] = to_rows(t.value);
             return out;
           })
      .def(
          "extract",
          [](const FittedPretrain& f, const Vector& x) {
            return extract_representation(f.model, x).values;
          },
          py::arg("x"))
      .def(
          "head_states",
          [](const FittedPretrain& f, const Vector& x) { return to_rows(head_states(f.model, x)); },
          py::arg("x"))
      .def(
          "head_cosine",
          [](const FittedPretrain& f, const std::vector<Vector>& inputs) {
            const AnalysisReport r = head_cosine_stats(f.model, inputs);
            py::dict d;
            d["mean_cosine"] = r.mean_cosine;
            d["cosine_matrix"] = to_rows(r.cosine);
            d["mean_of_means"] = r.mean_of_means;
            d["mean_of_variances"] = r.mean_of_variances;
            return d;
          },
          py::arg("inputs"));

  m.def(
      "pretrain_fit",
      [](const std::vector<Vector>& data, const std::string& kind, std::size_t heads,
         std::size_t hidden_dim, double keep_probability, double penalty, double epsilon,
         const std::string& penalty_mode, std::size_t epochs, std::size_t batch_size,
         double learning_rate, std::uint64_t seed) {
        if (data.empty()) {
          throw DataError("pretrain_fit: empty dataset");
        }
        PretrainConfig c;
        c.kind = parse_model_kind(kind);
        c.heads = heads;
        c.hidden_dim = hidden_dim;
        c.input_dim = data.front().size();
        c.keep_probability = keep_probability;
        c.penalty = penalty;
        c.epsilon = epsilon;
        c.penalty_mode = parse_penalty_mode(penalty_mode);
        c.epochs = epochs;
        c.batch_size = batch_size;
        c.learning_rate = learning_rate;
        c.seed = seed;
        PretrainResult r = [&] {
          py::gil_scoped_release release;
          return pretrain_fit(data, c);
        }();
        return FittedPretrain{std::move(r.model), std::move(r.trace)};
      },
      py::arg("data"), py::arg("kind") = "macdae", py::arg("heads") = 4,
      py::arg("hidden_dim") = 16, py::arg("keep_probability") = 0.95, py::arg("penalty") = 0.05,
      py::arg("epsilon") = 0.75, py::arg("penalty_mode") = "raw", py::arg("epochs") = 5,
      py::arg("batch_size") = 64, py::arg("learning_rate") = 1e-3, py::arg("seed") = 0);

  m.def(
      "parse_config",
      [](const std::string& document, std::optional<std::string> preset,
         std::optional<std::uint64_t> seed) {
        return to_json(parse_experiment_config(parse_document(document), preset, seed))
            .dump();
      },
      py::arg("document"), py::arg("preset") = py::none(), py::arg("seed") = py::none(),
      "Validates a config JSON document and returns the full snapshot as JSON text.");

  m.def(
      "run_experiment",
      [](const std::string& document) {
        const ExperimentConfig cfg = parse_experiment_config(parse_document(document));
        ExperimentResult r = [&] {
          py::gil_scoped_release release;
          return run_experiment(load_dataset(cfg), cfg);
        }();
        py::dict metrics;
        for (const auto& mv : r.metrics.metrics) {
          metrics[py::str(mv.k ? mv.metric + "@" + std::to_string(mv.k) : mv.metric)] = mv.value;
        }
        py::dict out;
        out["metrics"] = metrics;
        out["ranker_loss"] = r.ranker.trace;
        py::list pretrain;
        if (r.pretrain) {
          for (const auto& e : r.pretrain->trace) pretrain.append(loss_dict(e.loss));
        }
        out["pretrain_loss"] = pretrain;
        return out;
      },
      py::arg("document"), "Pre-trains (if integrated), trains and evaluates from a config JSON.");
}
