#include "ctxrec/features.hpp"

#include "ctxrec/error.hpp"

namespace ctxrec {

std::string to_string(EntityKind kind) { return kind == EntityKind::user ? "user" : "item"; }

EmbeddingTable::EmbeddingTable(EntityKind kind, std::size_t vocab, std::size_t dim,
                               OovPolicy policy)
    : kind_(kind), policy_(policy), weights_(vocab, dim), fallback_(dim, 0.0) {}

EmbeddingTable EmbeddingTable::random(EntityKind kind, std::size_t vocab, std::size_t dim,
                                      Rng& rng, OovPolicy policy) {
  EmbeddingTable table(kind, vocab, dim, policy);
  for (double& v : table.weights_.values()) {
    v = rng.uniform(-0.05, 0.05);
  }
  return table;
}

std::span<const double> EmbeddingTable::lookup(std::size_t id) const {
  if (contains(id)) {
    return weights_.row(id);
  }
  if (policy_ == OovPolicy::fallback) {
    return fallback_;
  }
  throw UnknownEntityError("unknown " + to_string(kind_) + " id " + std::to_string(id) +
                           " (vocabulary size " + std::to_string(vocab_size()) + ")");
}

std::span<const double> lookup_embedding(const EmbeddingTable& table, std::size_t id) {
  return table.lookup(id);
}

InputVector assemble_input(std::span<const double> user, std::span<const double> item,
                           std::span<const double> side) {
  if (user.size() != item.size()) {
    throw DimensionError("assemble_input: user embedding has " + std::to_string(user.size()) +
                         " entries, item embedding has " + std::to_string(item.size()));
  }
  const std::size_t d = user.size();
  InputVector x;
  x.layout = {0, d, d, d, 2 * d, d, 3 * d, side.size()};
  x.values.reserve(3 * d + side.size());
  x.values.insert(x.values.end(), user.begin(), user.end());
  x.values.insert(x.values.end(), item.begin(), item.end());
  for (std::size_t k = 0; k < d; ++k) {
    x.values.push_back(user[k] * item[k]);
  }
  x.values.insert(x.values.end(), side.begin(), side.end());
  return x;
}

FeatureSpace FeatureSpace::create(std::size_t n_users, std::size_t n_items, std::size_t dim,
                                  std::size_t side_dim, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "embeddings"));
  FeatureSpace space;
  space.users = EmbeddingTable::random(EntityKind::user, n_users, dim, rng);
  space.items = EmbeddingTable::random(EntityKind::item, n_items, dim, rng);
  space.side_dim = side_dim;
  return space;
}

InputVector FeatureSpace::assemble(std::size_t user, std::size_t item,
                                   std::span<const double> side) const {
  if (side.size() != side_dim) {
    throw DimensionError("side features have " + std::to_string(side.size()) +
                         " entries, feature space expects " + std::to_string(side_dim));
  }
  return assemble_input(users.lookup(user), items.lookup(item), side);
}

void FeatureSpace::accumulate_gradient(std::size_t user, std::size_t item,
                                       std::span<const double> grad_x, Matrix& grad_users,
                                       Matrix& grad_items) const {
  const std::size_t d = embedding_dim();
  if (grad_x.size() != input_dim()) {
    throw DimensionError("accumulate_gradient: gradient length mismatch");
  }
  const auto eu = users.lookup(user);
  const auto ei = items.lookup(item);
  if (users.contains(user)) {
    auto row = grad_users.row(user);
    for (std::size_t k = 0; k < d; ++k) {
      row[k] += grad_x[k] + grad_x[2 * d + k] * ei[k];
    }
  }
  if (items.contains(item)) {
    auto row = grad_items.row(item);
    for (std::size_t k = 0; k < d; ++k) {
      row[k] += grad_x[d + k] + grad_x[2 * d + k] * eu[k];
    }
  }
}

}  // namespace ctxrec
