#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

#include "ctxrec/numerics.hpp"

namespace ctxrec {

enum class EntityKind { user, item };
enum class OovPolicy { strict, fallback };

std::string to_string(EntityKind kind);

/// Dense id -> vector table. Ids are the dense indices [0, vocab) produced by
/// ingestion; the fallback row answers out-of-vocabulary ids when the policy
/// allows it.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(EntityKind kind, std::size_t vocab, std::size_t dim,
                 OovPolicy policy = OovPolicy::strict);

  /// Rows drawn uniformly from [-0.05, 0.05]; the fallback row stays zero.
  static EmbeddingTable random(EntityKind kind, std::size_t vocab, std::size_t dim, Rng& rng,
                               OovPolicy policy = OovPolicy::strict);

  EntityKind kind() const noexcept { return kind_; }
  std::size_t vocab_size() const noexcept { return weights_.rows(); }
  std::size_t dimension() const noexcept { return weights_.cols(); }
  OovPolicy policy() const noexcept { return policy_; }
  void set_policy(OovPolicy policy) noexcept { policy_ = policy; }

  Matrix& weights() noexcept { return weights_; }
  const Matrix& weights() const noexcept { return weights_; }
  Vector& fallback_row() noexcept { return fallback_; }
  const Vector& fallback_row() const noexcept { return fallback_; }

  bool contains(std::size_t id) const noexcept { return id < vocab_size(); }
  std::span<const double> lookup(std::size_t id) const;

  friend bool operator==(const EmbeddingTable&, const EmbeddingTable&) = default;

 private:
  EntityKind kind_ = EntityKind::user;
  OovPolicy policy_ = OovPolicy::strict;
  Matrix weights_;
  Vector fallback_;
};

/// Throws UnknownEntityError for an out-of-vocabulary id under the strict policy.
std::span<const double> lookup_embedding(const EmbeddingTable& table, std::size_t id);

/// Offsets of the four segments of x = concat(e_u, e_i, e_u * e_i, e_side).
struct InputLayout {
  std::size_t user_offset = 0;
  std::size_t user_length = 0;
  std::size_t item_offset = 0;
  std::size_t item_length = 0;
  std::size_t interaction_offset = 0;
  std::size_t interaction_length = 0;
  std::size_t side_offset = 0;
  std::size_t side_length = 0;

  std::size_t total() const noexcept { return side_offset + side_length; }
  friend bool operator==(const InputLayout&, const InputLayout&) = default;
};

struct InputVector {
  Vector values;
  InputLayout layout;

  std::size_t size() const noexcept { return values.size(); }
};

InputVector assemble_input(std::span<const double> user, std::span<const double> item,
                           std::span<const double> side);

/// One (user, item, explicit context, label) row. `side` is the encoded
/// context block; ids are dense vocabulary indices.
struct Example {
  std::size_t user = 0;
  std::size_t item = 0;
  Vector side;
  double label = 0.0;
  std::uint64_t id = 0;

  friend bool operator==(const Example&, const Example&) = default;
};

/// User and item tables plus the width of the side-feature block: everything
/// needed to turn an interaction into an input vector.
struct FeatureSpace {
  EmbeddingTable users;
  EmbeddingTable items;
  std::size_t side_dim = 0;

  static FeatureSpace create(std::size_t n_users, std::size_t n_items, std::size_t dim,
                             std::size_t side_dim, std::uint64_t seed);

  std::size_t embedding_dim() const noexcept { return users.dimension(); }
  std::size_t input_dim() const noexcept { return 3 * embedding_dim() + side_dim; }

  InputVector assemble(std::size_t user, std::size_t item, std::span<const double> side) const;

  /// Maps dL/dx back onto the user and item rows (product rule for the
  /// interaction segment). Out-of-vocabulary ids receive no gradient.
  void accumulate_gradient(std::size_t user, std::size_t item, std::span<const double> grad_x,
                           Matrix& grad_users, Matrix& grad_items) const;

  friend bool operator==(const FeatureSpace&, const FeatureSpace&) = default;
};

}  // namespace ctxrec
