#include "ctxrec/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include "json.hpp"
#include <numeric>
#include <set>
#include <sstream>

#include "ctxrec/error.hpp"

namespace ctxrec {

namespace {

using json = nlohmann::json;

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

std::int64_t parse_int(std::string_view field, std::size_t line, const char* what) {
  std::int64_t value = 0;
  const auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || end != field.data() + field.size()) {
    throw DataError("line " + std::to_string(line) + ": " + what + " '" + std::string(field) +
                    "' is not an integer");
  }
  return value;
}

double parse_real(std::string_view field, std::size_t line, const char* what) {
  double value = 0.0;
  const auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || end != field.data() + field.size() || !std::isfinite(value)) {
    throw DataError("line " + std::to_string(line) + ": " + what + " '" + std::string(field) +
                    "' is not a finite number");
  }
  return value;
}

std::string format_real(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

// Row indices grouped per raw user id, users in ascending id order.
std::map<std::int64_t, std::vector<std::size_t>> rows_by_user(const InteractionTable& table) {
  std::map<std::int64_t, std::vector<std::size_t>> groups;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    groups[table.rows[r].user].push_back(r);
  }
  return groups;
}

InteractionTable keep_users(const InteractionTable& table, std::size_t min_rows) {
  std::map<std::int64_t, std::size_t> counts;
  for (const auto& row : table.rows) {
    ++counts[row.user];
  }
  InteractionTable out = table;
  out.rows.clear();
  for (const auto& row : table.rows) {
    if (counts[row.user] >= min_rows) {
      out.rows.push_back(row);
    }
  }
  return out;
}

}  // namespace

InteractionTable read_tsv(std::istream& in) {
  InteractionTable table;
  std::string line;
  std::size_t line_no = 0;
  std::size_t columns = 0;
  std::size_t context_start = 3;
  // For each context column in header order: true if categorical.
  std::vector<bool> categorical_at;
  bool header_seen = false;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty()) {
      continue;
    }
    const auto fields = split_tabs(line);
    if (!header_seen) {
      header_seen = true;
      columns = fields.size();
      if (fields.size() < 3 || fields[0] != "user_id" || fields[1] != "item_id") {
        throw DataError("header must start with user_id, item_id, rating|label");
      }
      if (fields[2] == "rating") {
        table.explicit_ratings = true;
      } else if (fields[2] != "label") {
        throw DataError("third column must be 'rating' or 'label', got '" +
                        std::string(fields[2]) + "'");
      }
      if (fields.size() > 3 && fields[3] == "timestamp") {
        table.has_timestamp = true;
        context_start = 4;
      }
      for (std::size_t c = context_start; c < fields.size(); ++c) {
        const std::string name(fields[c]);
        if (name.starts_with("c.") && name.size() > 2) {
          table.categorical_columns.push_back(name);
          categorical_at.push_back(true);
        } else if (name.starts_with("d.") && name.size() > 2) {
          table.dense_columns.push_back(name);
          categorical_at.push_back(false);
        } else {
          throw DataError("context column '" + name + "' must be prefixed with c. or d.");
        }
      }
      continue;
    }
    if (fields.size() != columns) {
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(columns) + " fields, got " + std::to_string(fields.size()));
    }
    Interaction row;
    row.user = parse_int(fields[0], line_no, "user_id");
    row.item = parse_int(fields[1], line_no, "item_id");
    if (row.user < 0 || row.item < 0) {
      throw DataError("line " + std::to_string(line_no) + ": ids must be non-negative");
    }
    row.rating = parse_real(fields[2], line_no, table.explicit_ratings ? "rating" : "label");
    if (!table.explicit_ratings && row.rating != 0.0 && row.rating != 1.0) {
      throw DataError("line " + std::to_string(line_no) + ": label must be 0 or 1");
    }
    if (table.has_timestamp) {
      row.timestamp = parse_int(fields[3], line_no, "timestamp");
    }
    for (std::size_t c = 0; c < categorical_at.size(); ++c) {
      const std::string_view value = fields[context_start + c];
      if (categorical_at[c]) {
        row.categorical.emplace_back(value);
      } else {
        row.dense.push_back(parse_real(value, line_no, "dense context value"));
      }
    }
    table.rows.push_back(std::move(row));
  }
  if (!header_seen) {
    throw DataError("empty input: missing header");
  }
  return table;
}

InteractionTable read_tsv_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open data file '" + path.string() + "'");
  }
  return read_tsv(in);
}

void write_tsv(std::ostream& out, const InteractionTable& table) {
  out << "user_id\titem_id\t" << (table.explicit_ratings ? "rating" : "label");
  if (table.has_timestamp) {
    out << "\ttimestamp";
  }
  for (const auto& c : table.categorical_columns) {
    out << '\t' << c;
  }
  for (const auto& d : table.dense_columns) {
    out << '\t' << d;
  }
  out << '\n';
  for (const auto& row : table.rows) {
    out << row.user << '\t' << row.item << '\t' << format_real(row.rating);
    if (table.has_timestamp) {
      out << '\t' << row.timestamp.value_or(0);
    }
    for (const auto& v : row.categorical) {
      out << '\t' << v;
    }
    for (double v : row.dense) {
      out << '\t' << format_real(v);
    }
    out << '\n';
  }
}

InteractionTable convert_implicit(const InteractionTable& raw, const ImplicitRule& rule) {
  if (!(rule.scale_min < rule.scale_max)) {
    throw DataError("unknown rating scale [" + format_real(rule.scale_min) + ", " +
                    format_real(rule.scale_max) + "]");
  }
  for (std::size_t r = 0; r < raw.rows.size(); ++r) {
    const double rating = raw.rows[r].rating;
    if (rating < rule.scale_min || rating > rule.scale_max) {
      throw DataError("row " + std::to_string(r) + ": rating " + format_real(rating) +
                      " outside the star scale [" + format_real(rule.scale_min) + ", " +
                      format_real(rule.scale_max) + "]");
    }
  }
  InteractionTable out = keep_users(raw, rule.min_reviews);
  out.explicit_ratings = false;
  for (auto& row : out.rows) {
    row.rating = row.rating >= rule.positive_threshold ? 1.0 : 0.0;
  }
  return out;
}

InteractionTable filter_min_interactions(const InteractionTable& table,
                                         std::size_t min_interactions) {
  return keep_users(table, min_interactions);
}

std::string to_string(SplitKind kind) {
  switch (kind) {
    case SplitKind::ratio:
      return "ratio";
    case SplitKind::leave_one_out:
      return "leave_one_out";
    case SplitKind::time_cutoff:
      return "time_cutoff";
  }
  return "unknown";
}

SplitKind parse_split_kind(const std::string& name) {
  if (name == "ratio") return SplitKind::ratio;
  if (name == "leave_one_out") return SplitKind::leave_one_out;
  if (name == "time_cutoff") return SplitKind::time_cutoff;
  throw ConfigError("data.split.strategy", "unknown split strategy '" + name +
                                               "' (expected ratio, leave_one_out or time_cutoff)");
}

Split split_dataset(const InteractionTable& table, const SplitStrategy& strategy,
                    std::uint64_t seed) {
  Split split;
  Rng rng(derive_seed(seed, "split"));
  switch (strategy.kind) {
    case SplitKind::ratio: {
      if (!(strategy.fraction > 0.0 && strategy.fraction < 1.0)) {
        throw ConfigError("data.split.fraction", "split fraction must lie in (0, 1)");
      }
      for (auto& [user, rows] : rows_by_user(table)) {
        rng.shuffle(rows);
        const auto n_train = static_cast<std::size_t>(
            std::llround(strategy.fraction * static_cast<double>(rows.size())));
        for (std::size_t i = 0; i < rows.size(); ++i) {
          (i < n_train ? split.train : split.test).push_back(rows[i]);
        }
      }
      break;
    }
    case SplitKind::leave_one_out: {
      for (const auto& [user, rows] : rows_by_user(table)) {
        std::vector<std::size_t> positives;
        for (std::size_t r : rows) {
          if (table.rows[r].rating == 1.0) {
            positives.push_back(r);
          }
        }
        if (positives.empty()) {
          throw DataError("user " + std::to_string(user) +
                          " has no positive interaction to hold out");
        }
        const std::size_t held = positives[rng.below(positives.size())];
        split.test.push_back(held);
        const std::int64_t held_item = table.rows[held].item;
        for (std::size_t r : rows) {
          if (r != held && table.rows[r].item != held_item) {
            split.train.push_back(r);
          }
        }
      }
      break;
    }
    case SplitKind::time_cutoff: {
      if (!table.has_timestamp) {
        throw DataError("time_cutoff split requires a timestamp column");
      }
      if (strategy.train_window <= 0 || strategy.test_window <= 0) {
        throw ConfigError("data.split.train_window",
                          "time_cutoff split needs positive train_window and test_window");
      }
      if (strategy.pretrain_window < 0) {
        throw ConfigError("data.split.pretrain_window", "pretrain_window must be >= 0");
      }
      for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const std::int64_t t = *table.rows[r].timestamp;
        if (t >= strategy.cutoff - strategy.train_window && t < strategy.cutoff) {
          split.train.push_back(r);
        } else if (t >= strategy.cutoff && t < strategy.cutoff + strategy.test_window) {
          split.test.push_back(r);
        }
        if (t >= strategy.cutoff - strategy.pretrain_window && t < strategy.cutoff &&
            table.rows[r].rating == 1.0) {
          split.pretrain.push_back(r);
        }
      }
      break;
    }
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

ContextEncoder ContextEncoder::fit(const InteractionTable& table) {
  std::vector<Categorical> cats;
  for (std::size_t c = 0; c < table.categorical_columns.size(); ++c) {
    std::set<std::string> values;
    for (const auto& row : table.rows) {
      values.insert(row.categorical.at(c));
    }
    cats.push_back({table.categorical_columns[c], c, {values.begin(), values.end()}});
  }
  std::vector<Dense> dense;
  for (std::size_t c = 0; c < table.dense_columns.size(); ++c) {
    Dense d{table.dense_columns[c], c, 0.0, 0.0};
    bool first = true;
    for (const auto& row : table.rows) {
      const double v = row.dense.at(c);
      d.min = first ? v : std::min(d.min, v);
      d.max = first ? v : std::max(d.max, v);
      first = false;
    }
    dense.push_back(d);
  }
  return ContextEncoder(std::move(cats), std::move(dense));
}

std::size_t ContextEncoder::width() const noexcept {
  std::size_t w = dense_.size();
  for (const auto& c : categorical_) {
    w += c.vocabulary.size() + 1;
  }
  return w;
}

Vector ContextEncoder::encode(const Interaction& row) const {
  Vector out;
  out.reserve(width());
  for (const auto& c : categorical_) {
    const std::string& value = row.categorical.at(c.column);
    const auto it = std::lower_bound(c.vocabulary.begin(), c.vocabulary.end(), value);
    const std::size_t slot = (it != c.vocabulary.end() && *it == value)
                                 ? static_cast<std::size_t>(it - c.vocabulary.begin())
                                 : c.vocabulary.size();
    for (std::size_t i = 0; i <= c.vocabulary.size(); ++i) {
      out.push_back(i == slot ? 1.0 : 0.0);
    }
  }
  for (const auto& d : dense_) {
    const double v = row.dense.at(d.column);
    const double range = d.max - d.min;
    out.push_back(range > 0.0 ? std::clamp((v - d.min) / range, 0.0, 1.0) : 0.0);
  }
  return out;
}

bool ContextEncoder::has_column(const std::string& name) const noexcept {
  return std::any_of(categorical_.begin(), categorical_.end(),
                     [&](const auto& c) { return c.name == name; }) ||
         std::any_of(dense_.begin(), dense_.end(), [&](const auto& d) { return d.name == name; });
}

ContextEncoder ContextEncoder::without(const std::string& name) const {
  if (!has_column(name)) {
    throw ConfigError("ablation.groups", "unknown feature group '" + name + "'");
  }
  ContextEncoder copy = *this;
  std::erase_if(copy.categorical_, [&](const auto& c) { return c.name == name; });
  std::erase_if(copy.dense_, [&](const auto& d) { return d.name == name; });
  return copy;
}

IdVocabulary::IdVocabulary(std::vector<std::int64_t> sorted_ids) : ids_(std::move(sorted_ids)) {
  if (!std::is_sorted(ids_.begin(), ids_.end()) ||
      std::adjacent_find(ids_.begin(), ids_.end()) != ids_.end()) {
    throw DataError("id vocabulary must be strictly increasing");
  }
}

std::optional<std::size_t> IdVocabulary::index(std::int64_t raw) const {
  const auto it = std::lower_bound(ids_.begin(), ids_.end(), raw);
  if (it == ids_.end() || *it != raw) {
    return std::nullopt;
  }
  return static_cast<std::size_t>(it - ids_.begin());
}

Example Dataset::example(std::size_t row) const {
  const auto& r = table.rows.at(row);
  return {row_user[row], row_item[row], context.encode(r), r.rating, row};
}

std::vector<Example> Dataset::examples(std::span<const std::size_t> rows) const {
  std::vector<Example> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) {
    out.push_back(example(r));
  }
  return out;
}

Dataset Dataset::without_feature(const std::string& column) const {
  Dataset copy = *this;
  copy.context = context.without(column);
  return copy;
}

Dataset build_dataset(InteractionTable table, const SplitStrategy& strategy, std::uint64_t seed) {
  if (table.explicit_ratings) {
    throw DataError("build_dataset: convert explicit ratings to 0/1 labels first");
  }
  if (table.rows.empty()) {
    throw DataError("build_dataset: no interactions");
  }
  Dataset ds;
  std::set<std::int64_t> users;
  std::set<std::int64_t> items;
  for (const auto& row : table.rows) {
    users.insert(row.user);
    items.insert(row.item);
  }
  ds.users = IdVocabulary({users.begin(), users.end()});
  ds.items = IdVocabulary({items.begin(), items.end()});
  ds.context = ContextEncoder::fit(table);

  ds.row_user.reserve(table.rows.size());
  ds.row_item.reserve(table.rows.size());
  ds.interacted.assign(ds.users.size(), {});
  ds.positives.assign(ds.users.size(), {});
  for (const auto& row : table.rows) {
    const std::size_t u = *ds.users.index(row.user);
    const std::size_t i = *ds.items.index(row.item);
    ds.row_user.push_back(u);
    ds.row_item.push_back(i);
    ds.interacted[u].push_back(i);
    if (row.rating == 1.0) {
      ds.positives[u].push_back(i);
    }
  }
  for (auto* index : {&ds.interacted, &ds.positives}) {
    for (auto& list : *index) {
      std::sort(list.begin(), list.end());
      list.erase(std::unique(list.begin(), list.end()), list.end());
    }
  }
  ds.catalog.resize(ds.items.size());
  std::iota(ds.catalog.begin(), ds.catalog.end(), std::size_t{0});

  Split split = split_dataset(table, strategy, seed);
  ds.train = std::move(split.train);
  ds.test = std::move(split.test);
  ds.pretrain = strategy.kind == SplitKind::time_cutoff ? std::move(split.pretrain)
                                                        : positive_rows(table, ds.train);
  ds.table = std::move(table);
  return ds;
}

std::vector<std::size_t> negative_sample(std::span<const std::size_t> catalog,
                                         std::span<const std::size_t> excluded, std::size_t ns,
                                         Rng& rng) {
  if (ns == 0) {
    return {};
  }
  auto is_excluded = [&](std::size_t item) {
    return std::binary_search(excluded.begin(), excluded.end(), item);
  };
  const auto blocked = static_cast<std::size_t>(
      std::count_if(catalog.begin(), catalog.end(), is_excluded));
  const std::size_t available = catalog.size() - blocked;
  if (available < ns) {
    throw SamplingError("negative sampling needs " + std::to_string(ns) + " items but only " +
                        std::to_string(available) + " are outside the positive set");
  }
  std::vector<std::size_t> out;
  out.reserve(ns);
  if (catalog.size() >= 4 * (blocked + ns)) {
    // Sparse case: rejection sampling against the catalog.
    std::set<std::size_t> chosen;
    while (out.size() < ns) {
      const std::size_t item = catalog[rng.below(catalog.size())];
      if (!is_excluded(item) && chosen.insert(item).second) {
        out.push_back(item);
      }
    }
    return out;
  }
  std::vector<std::size_t> candidates;
  candidates.reserve(available);
  for (std::size_t item : catalog) {
    if (!is_excluded(item)) {
      candidates.push_back(item);
    }
  }
  // Partial Fisher-Yates over the candidate list.
  for (std::size_t i = 0; i < ns; ++i) {
    std::swap(candidates[i], candidates[i + rng.below(candidates.size() - i)]);
    out.push_back(candidates[i]);
  }
  return out;
}

std::vector<std::size_t> positive_rows(const InteractionTable& table,
                                       std::span<const std::size_t> train) {
  std::vector<std::size_t> out;
  for (std::size_t r : train) {
    if (table.rows.at(r).rating == 1.0) {
      out.push_back(r);
    }
  }
  return out;
}

std::vector<InputVector> build_pretrain_set(const Dataset& dataset, const FeatureSpace& features) {
  std::vector<InputVector> out;
  out.reserve(dataset.pretrain.size());
  for (std::size_t r : dataset.pretrain) {
    const Example ex = dataset.example(r);
    out.push_back(features.assemble(ex.user, ex.item, ex.side));
  }
  if (out.empty()) {
    std::cerr << "warning: pre-training set is empty (no positive training interactions)\n";
  }
  return out;
}

std::vector<Example> with_training_negatives(const Dataset& dataset,
                                             std::span<const std::size_t> rows, std::size_t rate,
                                             std::uint64_t seed) {
  Rng rng(derive_seed(seed, "train-negatives"));
  std::vector<Example> out;
  std::uint64_t next_id = dataset.table.rows.size();
  for (std::size_t r : rows) {
    out.push_back(dataset.example(r));
    if (rate == 0 || out.back().label != 1.0) {
      continue;
    }
    const Example positive = out.back();
    const auto& excluded = dataset.interacted[positive.user];
    const std::size_t available = dataset.catalog.size() - excluded.size();
    for (std::size_t item :
         negative_sample(dataset.catalog, excluded, std::min(rate, available), rng)) {
      out.push_back({positive.user, item, positive.side, 0.0, next_id++});
    }
  }
  return out;
}

std::string context_encoder_json(const ContextEncoder& encoder) {
  json j;
  j["categorical"] = json::array();
  for (const auto& c : encoder.categorical()) {
    j["categorical"].push_back({{"name", c.name}, {"column", c.column}, {"vocabulary", c.vocabulary}});
  }
  j["dense"] = json::array();
  for (const auto& d : encoder.dense()) {
    j["dense"].push_back({{"name", d.name}, {"column", d.column}, {"min", d.min}, {"max", d.max}});
  }
  return j.dump();
}

ContextEncoder context_encoder_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    std::vector<ContextEncoder::Categorical> cats;
    for (const auto& c : j.at("categorical")) {
      cats.push_back({c.at("name").get<std::string>(), c.at("column").get<std::size_t>(),
                      c.at("vocabulary").get<std::vector<std::string>>()});
    }
    std::vector<ContextEncoder::Dense> dense;
    for (const auto& d : j.at("dense")) {
      dense.push_back({d.at("name").get<std::string>(), d.at("column").get<std::size_t>(),
                       d.at("min").get<double>(), d.at("max").get<double>()});
    }
    return ContextEncoder(std::move(cats), std::move(dense));
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed context encoder JSON: ") + e.what());
  }
}

std::string dataset_manifest_json(const Dataset& dataset, std::uint64_t seed) {
  json j;
  j["format"] = "ctxrec-dataset-manifest";
  j["version"] = 1;
  j["seed"] = seed;
  j["rows"] = dataset.table.rows.size();
  j["columns"] = {{"categorical", dataset.table.categorical_columns},
                  {"dense", dataset.table.dense_columns},
                  {"timestamp", dataset.table.has_timestamp}};
  j["users"] = dataset.users.ids();
  j["items"] = dataset.items.ids();
  j["context"] = json::parse(context_encoder_json(dataset.context));
  j["splits"] = {{"pretrain", dataset.pretrain}, {"train", dataset.train}, {"test", dataset.test}};
  return j.dump(2);
}

}  // namespace ctxrec
