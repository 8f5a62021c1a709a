#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ctxrec/data.hpp"
#include "ctxrec/numerics.hpp"
#include "ctxrec/pretrain.hpp"
#include "ctxrec/ranker.hpp"

namespace ctxrec {

enum class TieBreak { item_ascending };

struct RankedEntry {
  std::size_t item = 0;
  double score = 0.0;
  int relevance = 0;  // 0 or 1

  friend bool operator==(const RankedEntry&, const RankedEntry&) = default;
};

/// Entries sorted by descending score; equal scores ordered by ascending item id.
class RankedList {
 public:
  RankedList() = default;
  /// Sorts `entries`. Throws DataError for non-binary relevance and
  /// NumericError for non-finite scores.
  explicit RankedList(std::vector<RankedEntry> entries);

  const std::vector<RankedEntry>& entries() const noexcept { return entries_; }
  TieBreak tie_break() const noexcept { return TieBreak::item_ascending; }
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  std::vector<RankedEntry> entries_;
};

/// DCG@k / IDCG@k with gain 1/log2(rank + 1). A list without relevant items
/// scores 0.
double ndcg_at_k(const RankedList& list, std::size_t k);

/// P(score(pos) > score(neg)) with ties counted one half, computed from rank
/// statistics. Throws MetricError if either class is empty.
double auc(std::span<const double> positive, std::span<const double> negative);

struct AnalysisReport {
  double mean_cosine = 0.0;
  Matrix cosine;  // K x K, averaged over inputs
  double mean_of_means = 0.0;
  double mean_of_variances = 0.0;
  std::size_t samples = 0;
};

/// Pairwise cosines between the unweighted heads of each input, averaged over
/// pairs and then inputs. The moment fields describe the extracted
/// representations. Throws ConfigError when the model has fewer than two heads.
AnalysisReport head_cosine_stats(const PretrainModel& model, std::span<const Vector> inputs);

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
};

/// Per-vector population mean and variance, averaged across vectors.
Moments hidden_moments(std::span<const Vector> vectors);

struct EvalProtocol {
  std::vector<std::size_t> k = {5, 10};
  std::size_t negatives = 50;

  void validate() const;
};

struct MetricValue {
  std::string metric;  // "ndcg" or "auc"
  std::size_t k = 0;   // 0 for auc
  double value = 0.0;
};

struct EvaluationReport {
  std::vector<MetricValue> metrics;
  std::size_t lists = 0;
  std::size_t auc_positives = 0;
  std::size_t auc_negatives = 0;

  double value(const std::string& metric, std::size_t k = 0) const;
};

/// One ranked list per test positive: the positive plus `negatives` sampled
/// items the user never interacted with, scored under the positive's context.
/// NDCG is averaged over all lists. AUC pools every test row with the sampled
/// negatives.
EvaluationReport evaluate_ranking(const RankerModel& model, const Dataset& dataset,
                                  const EvalProtocol& protocol, std::uint64_t seed);

/// Recipe mapping a dataset to a test AUC.
using TrainingRecipe = std::function<double(const Dataset&)>;

/// AUC(full) - AUC(without `group`), running the same recipe twice.
/// Throws ConfigError for an unknown group.
double feature_ablation(const Dataset& dataset, const std::string& group,
                        const TrainingRecipe& recipe);

}  // namespace ctxrec
