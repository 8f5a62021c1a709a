#include "ctxrec/eval.hpp"

#include <algorithm>
#include <cmath>

#include "ctxrec/error.hpp"

namespace ctxrec {

RankedList::RankedList(std::vector<RankedEntry> entries) : entries_(std::move(entries)) {
  for (const auto& e : entries_) {
    if (e.relevance != 0 && e.relevance != 1) {
      throw DataError("relevance must be 0 or 1");
    }
    if (!std::isfinite(e.score)) {
      throw NumericError("ranked list contains a non-finite score");
    }
  }
  std::sort(entries_.begin(), entries_.end(), [](const RankedEntry& a, const RankedEntry& b) {
    if (a.score != b.score) {
      return a.score > b.score;
    }
    return a.item < b.item;
  });
}

double ndcg_at_k(const RankedList& list, std::size_t k) {
  if (k == 0) {
    throw ConfigError("eval.k", "cutoff k must be >= 1");
  }
  if (list.size() == 0) {
    throw MetricError("NDCG of an empty list");
  }
  const auto& entries = list.entries();
  const std::size_t depth = std::min(k, entries.size());
  double dcg = 0.0;
  std::size_t relevant = 0;
  for (std::size_t r = 0; r < entries.size(); ++r) {
    if (entries[r].relevance == 1) {
      ++relevant;
      if (r < depth) {
        dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
      }
    }
  }
  if (relevant == 0) {
    return 0.0;
  }
  double ideal = 0.0;
  for (std::size_t r = 0; r < std::min(depth, relevant); ++r) {
    ideal += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  }
  return dcg / ideal;
}

double auc(std::span<const double> positive, std::span<const double> negative) {
  if (positive.empty() || negative.empty()) {
    throw MetricError("AUC needs at least one positive and one negative score");
  }
  struct Scored {
    double score;
    bool positive;
  };
  std::vector<Scored> all;
  all.reserve(positive.size() + negative.size());
  for (double s : positive) {
    all.push_back({s, true});
  }
  for (double s : negative) {
    all.push_back({s, false});
  }
  for (const auto& s : all) {
    if (std::isnan(s.score)) {
      throw NumericError("AUC input contains NaN");
    }
  }
  std::sort(all.begin(), all.end(),
            [](const Scored& a, const Scored& b) { return a.score < b.score; });
  // Twice the number of concordant pairs: 2 per win, 1 per tie.
  std::uint64_t twice_wins = 0;
  std::uint64_t negatives_below = 0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    std::uint64_t pos = 0;
    std::uint64_t neg = 0;
    while (j < all.size() && all[j].score == all[i].score) {
      (all[j].positive ? pos : neg) += 1;
      ++j;
    }
    twice_wins += 2 * pos * negatives_below + pos * neg;
    negatives_below += neg;
    i = j;
  }
  const double pairs = static_cast<double>(positive.size()) * static_cast<double>(negative.size());
  return static_cast<double>(twice_wins) / (2.0 * pairs);
}

AnalysisReport head_cosine_stats(const PretrainModel& model, std::span<const Vector> inputs) {
  const std::size_t k = model.config().heads;
  if (k < 2) {
    throw ConfigError("pretrain.heads", "head cosine statistics need at least two heads");
  }
  if (inputs.empty()) {
    throw DataError("head cosine statistics need at least one input");
  }
  AnalysisReport report;
  report.cosine = Matrix(k, k);
  double pair_sum = 0.0;
  std::vector<Vector> representations;
  representations.reserve(inputs.size());
  for (const auto& x : inputs) {
    const Matrix heads = head_states(model, x);
    double input_sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = i + 1; j < k; ++j) {
        const double c = cosine_similarity(heads.row(i), heads.row(j));
        report.cosine(i, j) += c;
        input_sum += c;
      }
    }
    pair_sum += input_sum / static_cast<double>(k * (k - 1) / 2);
    representations.push_back(extract_representation(model, x).values);
  }
  const double n = static_cast<double>(inputs.size());
  for (std::size_t i = 0; i < k; ++i) {
    report.cosine(i, i) = 1.0;
    for (std::size_t j = i + 1; j < k; ++j) {
      report.cosine(i, j) /= n;
      report.cosine(j, i) = report.cosine(i, j);
    }
  }
  report.mean_cosine = pair_sum / n;
  const Moments m = hidden_moments(representations);
  report.mean_of_means = m.mean;
  report.mean_of_variances = m.variance;
  report.samples = inputs.size();
  return report;
}

Moments hidden_moments(std::span<const Vector> vectors) {
  if (vectors.empty()) {
    throw DataError("hidden_moments of an empty set");
  }
  const std::size_t dim = vectors.front().size();
  if (dim == 0) {
    throw DimensionError("hidden_moments of zero-length vectors");
  }
  Moments out;
  for (const auto& v : vectors) {
    if (v.size() != dim) {
      throw DimensionError("hidden_moments: vector length " + std::to_string(v.size()) +
                           " differs from " + std::to_string(dim));
    }
    double mean = 0.0;
    for (double x : v) {
      mean += x;
    }
    mean /= static_cast<double>(dim);
    double var = 0.0;
    for (double x : v) {
      var += (x - mean) * (x - mean);
    }
    out.mean += mean;
    out.variance += var / static_cast<double>(dim);
  }
  out.mean /= static_cast<double>(vectors.size());
  out.variance /= static_cast<double>(vectors.size());
  return out;
}

void EvalProtocol::validate() const {
  if (k.empty()) {
    throw ConfigError("eval.k", "at least one cutoff is required");
  }
  for (std::size_t v : k) {
    if (v == 0) {
      throw ConfigError("eval.k", "cutoffs must be >= 1");
    }
  }
}

double EvaluationReport::value(const std::string& metric, std::size_t k) const {
  for (const auto& m : metrics) {
    if (m.metric == metric && m.k == k) {
      return m.value;
    }
  }
  throw MetricError("metric " + metric + (k ? "@" + std::to_string(k) : "") + " not computed");
}

EvaluationReport evaluate_ranking(const RankerModel& model, const Dataset& dataset,
                                  const EvalProtocol& protocol, std::uint64_t seed) {
  protocol.validate();
  Rng rng(derive_seed(seed, "eval-negatives"));
  std::vector<double> pos_scores;
  std::vector<double> neg_scores;
  std::vector<double> ndcg_sums(protocol.k.size(), 0.0);
  std::size_t lists = 0;

  for (std::size_t row : dataset.test) {
    const Example ex = dataset.example(row);
    const double score = score_example(model, ex);
    if (ex.label != 1.0) {
      neg_scores.push_back(score);
      continue;
    }
    pos_scores.push_back(score);
    std::vector<RankedEntry> entries;
    entries.push_back({ex.item, score, 1});
    for (std::size_t item : negative_sample(dataset.catalog, dataset.interacted[ex.user],
                                            protocol.negatives, rng)) {
      Example neg = ex;
      neg.item = item;
      neg.label = 0.0;
      const double s = score_example(model, neg);
      neg_scores.push_back(s);
      entries.push_back({item, s, 0});
    }
    const RankedList list(std::move(entries));
    for (std::size_t c = 0; c < protocol.k.size(); ++c) {
      ndcg_sums[c] += ndcg_at_k(list, protocol.k[c]);
    }
    ++lists;
  }
  if (lists == 0) {
    throw MetricError("test split contains no positive interactions");
  }
  EvaluationReport report;
  for (std::size_t c = 0; c < protocol.k.size(); ++c) {
    report.metrics.push_back({"ndcg", protocol.k[c], ndcg_sums[c] / static_cast<double>(lists)});
  }
  report.metrics.push_back({"auc", 0, auc(pos_scores, neg_scores)});
  report.lists = lists;
  report.auc_positives = pos_scores.size();
  report.auc_negatives = neg_scores.size();
  return report;
}

double feature_ablation(const Dataset& dataset, const std::string& group,
                        const TrainingRecipe& recipe) {
  const Dataset ablated = dataset.without_feature(group);
  const double full = recipe(dataset);
  return full - recipe(ablated);
}

}  // namespace ctxrec
