#pragma once

// Test helpers and independent reference implementations. Nothing here calls
// into the library code it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "ctxrec/numerics.hpp"

namespace testing {

inline std::vector<double> flatten(const ctxrec::TensorList& tensors) {
  std::vector<double> out;
  for (const auto& t : tensors) {
    out.insert(out.end(), t.value.values().begin(), t.value.values().end());
  }
  return out;
}

inline void unflatten(std::span<const double> flat, ctxrec::TensorList& tensors) {
  std::size_t pos = 0;
  for (auto& t : tensors) {
    for (double& v : t.value.values()) {
      v = flat[pos++];
    }
  }
}

inline void randomize(ctxrec::TensorList& tensors, std::mt19937_64& gen, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& t : tensors) {
    for (double& v : t.value.values()) {
      v = u(gen);
    }
  }
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& gen, double lo = 0.0,
                                         double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) {
    x = u(gen);
  }
  return v;
}

// Plain exp-normalise without max subtraction; valid for moderate logits.
inline std::vector<double> naive_softmax(const std::vector<double>& z) {
  double sum = 0.0;
  for (double v : z) {
    sum += std::exp(v);
  }
  std::vector<double> out;
  for (double v : z) {
    out.push_back(std::exp(v) / sum);
  }
  return out;
}

// Sorts by descending score then ascending item and sums discounted gains.
struct BruteEntry {
  std::size_t item;
  double score;
  int relevance;
};

inline double brute_ndcg(std::vector<BruteEntry> list, std::size_t k) {
  std::stable_sort(list.begin(), list.end(), [](const BruteEntry& a, const BruteEntry& b) {
    return a.score > b.score || (a.score == b.score && a.item < b.item);
  });
  double dcg = 0.0;
  int relevant = 0;
  for (std::size_t r = 0; r < list.size(); ++r) {
    relevant += list[r].relevance;
    if (r < k && list[r].relevance) {
      dcg += 1.0 / std::log2(static_cast<double>(r + 2));
    }
  }
  if (relevant == 0) {
    return 0.0;
  }
  double ideal = 0.0;
  for (std::size_t r = 0; r < std::min<std::size_t>(k, static_cast<std::size_t>(relevant)); ++r) {
    ideal += 1.0 / std::log2(static_cast<double>(r + 2));
  }
  return dcg / ideal;
}

// Counts every (positive, negative) pair.
inline double pair_count_auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  double wins = 0.0;
  for (double p : pos) {
    for (double n : neg) {
      wins += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
    }
  }
  return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

// Monte-Carlo KL(q || N(0, I)) for diagonal q, with antithetic pairs:
// E_q[log q(z) - log p(z)].
inline double monte_carlo_kl(const std::vector<double>& mean, const std::vector<double>& logvar,
                             std::size_t samples, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  double total = 0.0;
  std::vector<double> eta(mean.size());
  for (std::size_t s = 0; s < samples / 2; ++s) {
    for (double& e : eta) {
      e = normal(gen);
    }
    for (int sign : {1, -1}) {
      double log_ratio = 0.0;
      for (std::size_t j = 0; j < mean.size(); ++j) {
        const double sd = std::exp(0.5 * logvar[j]);
        const double z = mean[j] + sign * sd * eta[j];
        const double log_q = -0.5 * std::log(2 * M_PI) - 0.5 * logvar[j] - 0.5 * eta[j] * eta[j];
        const double log_p = -0.5 * std::log(2 * M_PI) - 0.5 * z * z;
        log_ratio += log_q - log_p;
      }
      total += log_ratio;
    }
  }
  return total / static_cast<double>(2 * (samples / 2));
}

}  // namespace testing
