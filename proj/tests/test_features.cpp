#include <random>

#include "ctxrec/error.hpp"
#include "ctxrec/features.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace ctxrec;

TEST_CASE("embedding lookup") {
  EmbeddingTable table(EntityKind::item, 2, 3);
  table.weights() = Matrix(2, 3, Vector{1, 2, 3, 4, 5, 6});
  const auto row = lookup_embedding(table, 0);
  CHECK(Vector(row.begin(), row.end()) == Vector{1, 2, 3});
  CHECK_THROWS_AS(lookup_embedding(table, 2), UnknownEntityError);
  CHECK_THROWS_AS(lookup_embedding(table, 2), DataError);

  table.set_policy(OovPolicy::fallback);
  const auto fb = lookup_embedding(table, 2);
  CHECK(Vector(fb.begin(), fb.end()) == Vector{0, 0, 0});
}

TEST_CASE("random embeddings stay within the init range and are seeded") {
  Rng a(5);
  Rng b(5);
  const auto t1 = EmbeddingTable::random(EntityKind::user, 20, 8, a);
  const auto t2 = EmbeddingTable::random(EntityKind::user, 20, 8, b);
  CHECK(t1 == t2);
  for (double v : t1.weights().values()) {
    CHECK(v >= -0.05);
    CHECK(v <= 0.05);
  }
}

TEST_CASE("assemble_input examples") {
  const InputVector x = assemble_input(Vector{1, 2}, Vector{3, 4}, Vector{5});
  CHECK(x.values == Vector{1, 2, 3, 4, 3, 8, 5});
  CHECK(x.layout.user_offset == 0);
  CHECK(x.layout.item_offset == 2);
  CHECK(x.layout.interaction_offset == 4);
  CHECK(x.layout.interaction_length == 2);
  CHECK(x.layout.side_offset == 6);
  CHECK(x.layout.side_length == 1);

  const InputVector z = assemble_input(Vector{0, 0, 0}, Vector{7, -2, 9}, Vector{});
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(z.values[z.layout.interaction_offset + k] == 0.0);
  }

  const InputVector ones = assemble_input(Vector{1, 1}, Vector{1, 1}, Vector{});
  CHECK(ones.values == Vector{1, 1, 1, 1, 1, 1});

  CHECK_THROWS_AS(assemble_input(Vector{1, 2}, Vector{1}, Vector{}), DimensionError);
}

TEST_CASE("assemble_input length law and Hadamard segment") {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 1 + trial % 9;
    const std::size_t s = trial % 5;
    const Vector u = testing::random_vector(d, gen, -1, 1);
    const Vector i = testing::random_vector(d, gen, -1, 1);
    const Vector side = testing::random_vector(s, gen);
    const InputVector x = assemble_input(u, i, side);
    CHECK(x.size() == 3 * d + s);
    CHECK(x.layout.total() == x.size());
    for (std::size_t k = 0; k < d; ++k) {
      CHECK(x.values[x.layout.interaction_offset + k] == u[k] * i[k]);
    }
    const InputVector again = assemble_input(u, i, side);
    CHECK(again.values == x.values);
    CHECK(again.layout == x.layout);
  }
}

TEST_CASE("feature space gradient routing follows the product rule") {
  FeatureSpace space = FeatureSpace::create(3, 4, 2, 1, 7);
  const Vector side{0.5};
  const std::size_t u = 1;
  const std::size_t i = 2;
  std::mt19937_64 gen(3);
  const Vector w = testing::random_vector(space.input_dim(), gen, -1, 1);

  Matrix gu(3, 2);
  Matrix gi(4, 2);
  space.accumulate_gradient(u, i, w, gu, gi);

  // f(e_u, e_i) = w . x(e_u, e_i); compare with finite differences over both rows.
  Vector params;
  for (double v : space.users.weights().row(u)) params.push_back(v);
  for (double v : space.items.weights().row(i)) params.push_back(v);
  const auto f = [&](std::span<const double> p) {
    const InputVector x = assemble_input(p.first(2), p.subspan(2, 2), side);
    double s = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) s += w[k] * x.values[k];
    return s;
  };
  const Vector numeric = finite_diff_grad(f, params, 1e-6);
  Vector analytic;
  for (double v : gu.row(u)) analytic.push_back(v);
  for (double v : gi.row(i)) analytic.push_back(v);
  CHECK(gradient_relative_error(analytic, numeric) < 1e-8);
  CHECK(gu.row(0)[0] == 0.0);
  CHECK(gi.row(0)[0] == 0.0);

  CHECK_THROWS_AS(space.assemble(u, i, Vector{}), DimensionError);
  CHECK_THROWS_AS(space.assemble(9, i, side), UnknownEntityError);
}
