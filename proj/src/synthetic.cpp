#include "ctxrec/synthetic.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include "ctxrec/error.hpp"

namespace ctxrec {

InteractionTable make_planted_regimes(const SyntheticSpec& spec) {
  if (spec.regimes < 2) {
    throw ConfigError("regimes", "need at least two regimes");
  }
  if (spec.items < spec.regimes || spec.users == 0) {
    throw ConfigError("items", "need at least one user and one item per regime");
  }
  if (spec.interactions_per_user > spec.items / spec.regimes) {
    throw ConfigError("interactions_per_user",
                      "interactions_per_user may not exceed items / regimes");
  }
  if (!(spec.positive_rate >= 0.0 && spec.positive_rate <= 1.0)) {
    throw ConfigError("positive_rate", "positive_rate must lie in [0, 1]");
  }
  if (spec.horizon <= 0) {
    throw ConfigError("horizon", "horizon must be positive");
  }

  Rng rng(derive_seed(spec.seed, "synthetic"));
  const std::size_t per_category = spec.items / spec.regimes;
  InteractionTable table;
  table.explicit_ratings = spec.star_ratings;
  table.has_timestamp = true;
  table.categorical_columns = {"c.weekday"};
  table.dense_columns = {"d.time", "d.noise"};
  for (std::size_t j = 0; j < spec.signal_columns; ++j) {
    table.dense_columns.push_back("d.s" + std::to_string(j));
  }
  Matrix centres(spec.regimes, spec.signal_columns);
  for (double& v : centres.values()) {
    v = rng.uniform(0.2, 0.8);
  }

  const std::size_t types = spec.user_types == 0 ? spec.users : spec.user_types;
  std::vector<std::vector<std::size_t>> patterns(types, std::vector<std::size_t>(spec.regimes));
  for (auto& pattern : patterns) {
    std::iota(pattern.begin(), pattern.end(), std::size_t{0});
    rng.shuffle(pattern);
  }

  for (std::size_t u = 0; u < spec.users; ++u) {
    const auto& preference = patterns[u % types];
    std::vector<bool> used(spec.items, false);
    for (std::size_t n = 0; n < spec.interactions_per_user; ++n) {
      const std::size_t regime = rng.below(spec.regimes);
      const bool positive = rng.bernoulli(spec.positive_rate);
      std::size_t category = preference[regime];
      if (!positive) {
        category = (category + 1 + rng.below(spec.regimes - 1)) % spec.regimes;
      }
      std::size_t item = 0;
      do {
        item = category + spec.regimes * rng.below(per_category);
      } while (used[item]);
      used[item] = true;

      Interaction row;
      row.user = static_cast<std::int64_t>(u);
      row.item = static_cast<std::int64_t>(item);
      row.timestamp = static_cast<std::int64_t>(rng.below(static_cast<std::size_t>(spec.horizon)));
      const std::size_t weekday =
          rng.bernoulli(spec.context_fidelity) ? regime % 7 : rng.below(7);
      row.categorical = {"day" + std::to_string(weekday)};
      const double t = (static_cast<double>(regime) + 0.5 + spec.time_jitter * rng.normal()) /
                       static_cast<double>(spec.regimes);
      row.dense = {std::clamp(t, 0.0, 1.0), rng.uniform()};
      for (std::size_t j = 0; j < spec.signal_columns; ++j) {
        row.dense.push_back(
            std::clamp(centres(regime, j) + spec.signal_noise * rng.normal(), 0.0, 1.0));
      }
      const bool label = positive != rng.bernoulli(spec.label_noise);
      if (spec.star_ratings) {
        row.rating = label ? static_cast<double>(4 + rng.below(2))
                           : static_cast<double>(1 + rng.below(3));
      } else {
        row.rating = label ? 1.0 : 0.0;
      }
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

}  // namespace ctxrec
