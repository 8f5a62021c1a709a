#pragma once

#include <cstddef>
#include <cstdint>

#include "ctxrec/data.hpp"

namespace ctxrec {

/// Interaction log with a hidden per-row regime. Items fall into `regimes`
/// categories (item % regimes) and every user prefers a different category
/// in each regime. Users share one of `user_types` preference patterns
/// (0: every user has their own). A row is positive when the item's category is the user's
/// preference under the row's regime.
///
/// Context columns: c.weekday (equals the regime with probability
/// `context_fidelity`, else a uniform day), d.time (regime plus jitter,
/// scaled to [0, 1]), d.noise (uniform, unrelated to anything) and
/// `signal_columns` extra dense columns d.s<j> drawn around a per-regime
/// centre with Gaussian noise of scale `signal_noise`.
struct SyntheticSpec {
  std::size_t users = 50;
  std::size_t items = 200;
  std::size_t regimes = 4;
  std::size_t interactions_per_user = 40;
  std::size_t user_types = 0;
  double positive_rate = 0.5;
  double context_fidelity = 0.7;
  double time_jitter = 0.35;
  double label_noise = 0.0;
  std::size_t signal_columns = 0;
  double signal_noise = 0.3;
  std::int64_t horizon = 100;
  // Emit 1-5 star ratings instead of 0/1 labels.
  bool star_ratings = false;
  std::uint64_t seed = 0;
};

/// Each user's items are distinct. Throws ConfigError for an impossible spec.
InteractionTable make_planted_regimes(const SyntheticSpec& spec);

}  // namespace ctxrec
