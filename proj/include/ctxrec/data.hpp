#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctxrec/features.hpp"
#include "ctxrec/numerics.hpp"

namespace ctxrec {

/// One raw row. `rating` holds stars before implicit conversion and the 0/1
/// label afterwards. Context values are aligned with the owning table's
/// column lists.
struct Interaction {
  std::int64_t user = 0;
  std::int64_t item = 0;
  double rating = 0.0;
  std::optional<std::int64_t> timestamp;
  std::vector<std::string> categorical;
  Vector dense;

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

/// Rows plus the declared header schema. Column names keep their `c.` or
/// `d.` prefix.
struct InteractionTable {
  // true: third column is `rating` (stars); false: `label` (0/1).
  bool explicit_ratings = false;
  bool has_timestamp = false;
  std::vector<std::string> categorical_columns;
  std::vector<std::string> dense_columns;
  std::vector<Interaction> rows;

  friend bool operator==(const InteractionTable&, const InteractionTable&) = default;
};

InteractionTable read_tsv(std::istream& in);
InteractionTable read_tsv_file(const std::filesystem::path& path);
void write_tsv(std::ostream& out, const InteractionTable& table);

struct ImplicitRule {
  double positive_threshold = 4.0;
  std::size_t min_reviews = 20;
  double scale_min = 1.0;
  double scale_max = 5.0;
};

/// rating >= threshold -> 1 else 0, after dropping users with fewer than
/// `min_reviews` interactions. Throws DataError for ratings outside the scale.
InteractionTable convert_implicit(const InteractionTable& raw, const ImplicitRule& rule);

/// Drops users with fewer than `min_interactions` rows; labels untouched.
InteractionTable filter_min_interactions(const InteractionTable& table,
                                         std::size_t min_interactions);

enum class SplitKind { ratio, leave_one_out, time_cutoff };

std::string to_string(SplitKind kind);
SplitKind parse_split_kind(const std::string& name);

/// Time windows are half-open: train [cutoff - train_window, cutoff),
/// test [cutoff, cutoff + test_window), pretrain [cutoff - pretrain_window,
/// cutoff) restricted to positives.
struct SplitStrategy {
  SplitKind kind = SplitKind::ratio;
  double fraction = 0.8;
  std::int64_t cutoff = 0;
  std::int64_t train_window = 0;
  std::int64_t test_window = 0;
  std::int64_t pretrain_window = 0;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  // Filled by the time-cutoff strategy only.
  std::vector<std::size_t> pretrain;
};

/// Row indices of the train/test partition. Deterministic under `seed`.
Split split_dataset(const InteractionTable& table, const SplitStrategy& strategy,
                    std::uint64_t seed);

/// Fitted one-hot vocabularies (with a trailing OOV slot) and min-max
/// statistics for the context columns.
class ContextEncoder {
 public:
  struct Categorical {
    std::string name;
    std::size_t column = 0;  // position in Interaction::categorical
    std::vector<std::string> vocabulary;  // sorted
    friend bool operator==(const Categorical&, const Categorical&) = default;
  };
  struct Dense {
    std::string name;
    std::size_t column = 0;  // position in Interaction::dense
    double min = 0.0;
    double max = 0.0;
    friend bool operator==(const Dense&, const Dense&) = default;
  };

  ContextEncoder() = default;
  ContextEncoder(std::vector<Categorical> categorical, std::vector<Dense> dense)
      : categorical_(std::move(categorical)), dense_(std::move(dense)) {}

  static ContextEncoder fit(const InteractionTable& table);

  /// Encoded width: sum of (vocabulary + 1) over categorical columns plus
  /// one slot per dense column.
  std::size_t width() const noexcept;
  /// Dense values are min-max scaled and clamped to [0, 1].
  Vector encode(const Interaction& row) const;

  const std::vector<Categorical>& categorical() const noexcept { return categorical_; }
  const std::vector<Dense>& dense() const noexcept { return dense_; }
  bool has_column(const std::string& name) const noexcept;
  /// Copy without the named column. Throws ConfigError for unknown names.
  ContextEncoder without(const std::string& name) const;

  friend bool operator==(const ContextEncoder&, const ContextEncoder&) = default;

 private:
  std::vector<Categorical> categorical_;
  std::vector<Dense> dense_;
};

/// Maps raw non-negative ids to dense indices in ascending raw-id order.
class IdVocabulary {
 public:
  IdVocabulary() = default;
  explicit IdVocabulary(std::vector<std::int64_t> sorted_ids);

  std::size_t size() const noexcept { return ids_.size(); }
  std::optional<std::size_t> index(std::int64_t raw) const;
  std::int64_t raw(std::size_t index) const { return ids_.at(index); }
  const std::vector<std::int64_t>& ids() const noexcept { return ids_; }

  friend bool operator==(const IdVocabulary&, const IdVocabulary&) = default;

 private:
  std::vector<std::int64_t> ids_;
};

/// An ingested, split dataset. Immutable after construction.
struct Dataset {
  InteractionTable table;  // labels are 0/1
  IdVocabulary users;
  IdVocabulary items;
  ContextEncoder context;
  std::vector<std::size_t> row_user;  // dense user index per row
  std::vector<std::size_t> row_item;  // dense item index per row
  std::vector<std::size_t> pretrain;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::vector<std::size_t> catalog;                  // every dense item index
  std::vector<std::vector<std::size_t>> interacted;  // per user, sorted dense item indices
  std::vector<std::vector<std::size_t>> positives;   // per user, sorted, label-1 only

  std::size_t side_dim() const noexcept { return context.width(); }
  Example example(std::size_t row) const;
  std::vector<Example> examples(std::span<const std::size_t> rows) const;

  /// Same rows, splits and ids with one context column removed from the encoding.
  Dataset without_feature(const std::string& column) const;
};

/// Labels must already be 0/1. Builds vocabularies, fits the context encoder
/// on all rows, splits, and derives the pre-training rows.
Dataset build_dataset(InteractionTable table, const SplitStrategy& strategy, std::uint64_t seed);

/// `ns` distinct items from `catalog` outside `excluded` (sorted). Throws
/// SamplingError when fewer than `ns` candidates exist.
std::vector<std::size_t> negative_sample(std::span<const std::size_t> catalog,
                                         std::span<const std::size_t> excluded, std::size_t ns,
                                         Rng& rng);

/// Label-1 rows among `train`.
std::vector<std::size_t> positive_rows(const InteractionTable& table,
                                       std::span<const std::size_t> train);

/// Assembled inputs for every pre-training row. Prints a warning to stderr
/// when the result is empty.
std::vector<InputVector> build_pretrain_set(const Dataset& dataset, const FeatureSpace& features);

/// Training rows plus `rate` sampled negatives per positive. Each negative
/// copies its positive's context and never hits an item the user interacted with.
std::vector<Example> with_training_negatives(const Dataset& dataset,
                                             std::span<const std::size_t> rows, std::size_t rate,
                                             std::uint64_t seed);

/// Split membership, vocabularies and normalization statistics as JSON text.
std::string dataset_manifest_json(const Dataset& dataset, std::uint64_t seed);

std::string context_encoder_json(const ContextEncoder& encoder);
ContextEncoder context_encoder_from_json(const std::string& text);

}  // namespace ctxrec
