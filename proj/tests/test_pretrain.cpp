#include <cmath>
#include <limits>
#include <random>

#include "ctxrec/error.hpp"
#include "ctxrec/eval.hpp"
#include "ctxrec/pretrain.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace ctxrec;

namespace {

PretrainConfig small_config(ModelKind kind, std::size_t heads, std::size_t hidden,
                            std::size_t input, std::uint64_t seed = 1) {
  PretrainConfig c;
  c.kind = kind;
  c.heads = heads;
  c.hidden_dim = hidden;
  c.input_dim = input;
  c.seed = seed;
  return c;
}

PretrainModel zero_model(const PretrainConfig& c) {
  PretrainModel m = PretrainModel::initialize(c);
  for (auto& t : m.parameters()) {
    t.value.fill(0.0);
  }
  return m;
}

Matrix& param(PretrainModel& m, const std::string& name) {
  for (auto& t : m.parameters()) {
    if (t.name == name) {
      return t.value;
    }
  }
  throw std::runtime_error("no tensor " + name);
}

std::vector<Vector> toy_dataset(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::vector<Vector> data;
  // Two prototypes plus noise, clamped into [0, 1].
  const Vector a = testing::random_vector(dim, gen);
  const Vector b = testing::random_vector(dim, gen);
  std::normal_distribution<double> noise(0.0, 0.05);
  for (std::size_t i = 0; i < n; ++i) {
    Vector x = (i % 2 == 0) ? a : b;
    for (double& v : x) {
      v = std::clamp(v + noise(gen), 0.0, 1.0);
    }
    data.push_back(x);
  }
  return data;
}

double penalty_of_angle(double theta, PenaltyMode mode) {
  Matrix heads(2, 2, Vector{1.0, 0.0, std::cos(theta), std::sin(theta)});
  return similarity_penalty(heads, 0.05, 0.75, mode);
}

}  // namespace

TEST_CASE("config validation names the field") {
  auto c = small_config(ModelKind::dae, 3, 8, 4);
  try {
    c.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "hidden_dim");
  }
  c = small_config(ModelKind::dae, 2, 8, 4);
  c.epsilon = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.epsilon = 0.75;
  c.keep_probability = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(parse_model_kind("gan"), ConfigError);
  CHECK(parse_model_kind("macdae") == ModelKind::macdae);
  CHECK(parse_penalty_mode("hinge") == PenaltyMode::hinge);
  CHECK(parse_pair_convention("all") == PairConvention::all);
}

TEST_CASE("corrupt_mask") {
  Rng rng(1);
  const Vector x{0.1, 0.2, 0.3, 0.4};
  CHECK(corrupt_mask(x, 1.0, rng) == x);
  CHECK(corrupt_mask(x, 0.0, rng) == Vector(4, 0.0));
  CHECK_THROWS_AS(corrupt_mask(x, -0.1, rng), ConfigError);
  CHECK_THROWS_AS(corrupt_mask(x, 1.1, rng), ConfigError);

  const Vector big(100000, 1.0);
  Rng r1(42);
  const Vector masked = corrupt_mask(big, 0.95, r1);
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < masked.size(); ++i) {
    if (masked[i] == 0.0) {
      ++zeros;
    } else {
      CHECK(masked[i] == 1.0);  // kept coordinates are not rescaled
    }
  }
  const double fraction = static_cast<double>(zeros) / static_cast<double>(big.size());
  CHECK(fraction >= 0.045);
  CHECK(fraction <= 0.055);

  Rng r2(42);
  CHECK(corrupt_mask(big, 0.95, r2) == masked);
}

TEST_CASE("dae_forward with zero parameters") {
  const auto c = small_config(ModelKind::dae, 2, 4, 3);
  const PretrainModel m = zero_model(c);
  const Vector x{0.0, 1.0, 0.25};
  const auto r = dae_forward(m, x, x);
  CHECK(r.representation.values == Vector(4, 0.5));
  CHECK(r.reconstruction == Vector(3, 0.5));
  CHECK(r.loss.reconstruction == doctest::Approx(0.25 + 0.25 + 0.0625));
  CHECK(r.loss.total == r.loss.reconstruction);
  CHECK(r.loss.kl == 0.0);
  CHECK(r.loss.penalty == 0.0);
}

TEST_CASE("dae_forward with a decoder that reproduces the input") {
  const auto c = small_config(ModelKind::dae, 1, 2, 3);
  PretrainModel m = zero_model(c);
  const Vector x{0.2, 0.5, 0.9};
  for (std::size_t j = 0; j < 3; ++j) {
    param(m, "decoder.bias")(j, 0) = std::log(x[j] / (1.0 - x[j]));
  }
  const auto r = dae_forward(m, x, x);
  CHECK(r.loss.reconstruction < 1e-28);
}

TEST_CASE("dae_forward head layout") {
  const auto c = small_config(ModelKind::dae, 4, 256, 10);
  const PretrainModel m = PretrainModel::initialize(c);
  std::mt19937_64 gen(2);
  const Vector x = testing::random_vector(10, gen);
  const auto r = dae_forward(m, x, x);
  REQUIRE(r.representation.values.size() == 256);
  const Matrix heads = head_states(m, x);
  CHECK(heads.rows() == 4);
  CHECK(heads.cols() == 64);
  for (std::size_t k = 0; k < 4; ++k) {
    for (std::size_t j = 0; j < 64; ++j) {
      CHECK(r.representation.values[k * 64 + j] == heads(k, j));
    }
  }
  CHECK_THROWS_AS(dae_forward(m, Vector(9, 0.0), Vector(9, 0.0)), DimensionError);
  const PretrainModel v = PretrainModel::initialize(small_config(ModelKind::vae, 4, 8, 10));
  CHECK_THROWS_AS(dae_forward(v, x, x), ConfigError);
}

TEST_CASE("gaussian_kl closed form") {
  CHECK(gaussian_kl(Vector{0, 0, 0}, Vector{0, 0, 0}) == 0.0);
  CHECK(gaussian_kl(Vector{1.0}, Vector{0.0}) == 0.5);
  // sigma^2 = e: 0.5 * (e - 1 - 1)
  CHECK(gaussian_kl(Vector{0.0}, Vector{1.0}) == doctest::Approx(0.5 * (std::exp(1.0) - 2.0)));
  std::mt19937_64 gen(4);
  for (int trial = 0; trial < 200; ++trial) {
    const Vector mu = testing::random_vector(5, gen, -2, 2);
    const Vector lv = testing::random_vector(5, gen, -3, 3);
    CHECK(gaussian_kl(mu, lv) > 0.0);
  }
}

TEST_CASE("vae_forward") {
  const auto c = small_config(ModelKind::vae, 2, 4, 3);
  const PretrainModel zero = zero_model(c);
  const Vector x{0.3, 0.6, 0.9};
  Rng rng(1);
  const auto r = vae_forward(zero, x, rng);
  CHECK(r.loss.kl == 0.0);
  CHECK(r.z.size() == 4);

  const PretrainModel m = PretrainModel::initialize(c);
  Rng a(77);
  Rng b(77);
  CHECK(vae_forward(m, x, a).z == vae_forward(m, x, b).z);

  PretrainModel bad = m;
  param(bad, "encoder_logvar.bias")(0, 0) = std::numeric_limits<double>::infinity();
  Rng r3(1);
  CHECK_THROWS_AS(vae_forward(bad, x, r3), NumericError);
}

TEST_CASE("attention_weights examples") {
  {
    const auto c = small_config(ModelKind::macdae, 1, 3, 4);
    const PretrainModel m = PretrainModel::initialize(c);
    const Matrix heads(1, 3, Vector{0.2, 0.4, 0.6});
    CHECK(attention_weights(m, Vector{1, 2, 3, 4}, heads) == Vector{1.0});
  }
  {
    const auto c = small_config(ModelKind::macdae, 4, 8, 5);
    const PretrainModel m = PretrainModel::initialize(c);
    const Matrix heads(4, 2, Vector{0.3, 0.7, 0.3, 0.7, 0.3, 0.7, 0.3, 0.7});
    for (double w : attention_weights(m, Vector{0.1, 0.2, 0.3, 0.4, 0.5}, heads)) {
      CHECK(w == doctest::Approx(0.25).epsilon(1e-14));
    }
  }
  {
    const auto c = small_config(ModelKind::macdae, 2, 4, 2);
    PretrainModel m = zero_model(c);
    Matrix& wa = param(m, "attention.weight");
    wa(0, 0) = 1.0;
    wa(1, 1) = 1.0;
    const Matrix heads(2, 2, Vector{std::log(2.0), 0.0, 0.0, 123.0});
    const Vector w = attention_weights(m, Vector{1.0, 0.0}, heads);
    CHECK(std::abs(w[0] - 2.0 / 3.0) < 1e-12);
    CHECK(std::abs(w[1] - 1.0 / 3.0) < 1e-12);
    CHECK_THROWS_AS(attention_weights(m, Vector{1.0}, heads), DimensionError);
  }
}

TEST_CASE("similarity_penalty examples") {
  const Matrix same(2, 3, Vector{1, 2, 3, 1, 2, 3});
  CHECK(similarity_penalty(same, 0.05, 0.75, PenaltyMode::raw) == doctest::Approx(0.0125));
  CHECK(similarity_penalty(same, 0.05, 0.75, PenaltyMode::hinge) == doctest::Approx(0.0125));
  const Matrix orth(2, 2, Vector{1, 0, 0, 1});
  CHECK(similarity_penalty(orth, 0.05, 0.75, PenaltyMode::raw) == doctest::Approx(-0.0375));
  CHECK(similarity_penalty(orth, 0.05, 0.75, PenaltyMode::hinge) == 0.0);
  CHECK(similarity_penalty(Matrix(1, 3, Vector{1, 2, 3}), 0.05, 0.75, PenaltyMode::raw) == 0.0);
  CHECK_THROWS_AS(similarity_penalty(Matrix(2, 2, Vector{0, 0, 1, 1}), 0.05, 0.75,
                                     PenaltyMode::raw),
                  DegenerateInputError);
}

TEST_CASE("similarity_penalty pair conventions") {
  std::mt19937_64 gen(8);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t k = 1 + trial % 4;
    Matrix heads(k, 3, testing::random_vector(3 * k, gen, 0.1, 1.0));
    const double unordered = similarity_penalty(heads, 0.1, 0.5, PenaltyMode::raw);
    const double all =
        similarity_penalty(heads, 0.1, 0.5, PenaltyMode::raw, PairConvention::all);
    if (k == 1) {
      CHECK(all == 0.0);  // a single head carries no penalty under either convention
    } else {
      CHECK(all == doctest::Approx(2.0 * unordered + k * 0.1 * 0.5));
    }
  }
}

TEST_CASE("hinge penalty is monotone in the cosine and zero below epsilon") {
  double previous = -1.0;
  for (int step = 100; step >= 0; --step) {
    const double theta = 1.5 * step / 100.0;  // cosine increases as theta shrinks
    const double p = penalty_of_angle(theta, PenaltyMode::hinge);
    if (std::cos(theta) <= 0.75) {
      CHECK(p == 0.0);
    }
    CHECK(p >= previous);
    previous = p;
  }
  std::mt19937_64 gen(9);
  for (int trial = 0; trial < 50; ++trial) {
    // Nonnegative orthogonal-ish heads: disjoint supports give cosine 0.
    Matrix heads(3, 6);
    for (std::size_t k = 0; k < 3; ++k) {
      heads(k, 2 * k) = 0.1 + testing::random_vector(1, gen)[0];
      heads(k, 2 * k + 1) = 0.1 + testing::random_vector(1, gen)[0];
    }
    CHECK(similarity_penalty(heads, 0.5, 0.75, PenaltyMode::hinge) == 0.0);
  }
}

TEST_CASE("macdae_forward") {
  std::mt19937_64 gen(5);
  const Vector x = testing::random_vector(6, gen);
  Rng rng(3);
  const Vector xt = corrupt_mask(x, 0.8, rng);

  SUBCASE("K = 1 reduces to the DAE") {
    const PretrainModel mac = PretrainModel::initialize(small_config(ModelKind::macdae, 1, 4, 6));
    const PretrainModel dae = PretrainModel::initialize(small_config(ModelKind::dae, 1, 4, 6));
    for (std::size_t i = 0; i < 4; ++i) {
      REQUIRE(mac.parameters()[i] == dae.parameters()[i]);
    }
    const auto a = macdae_forward(mac, x, xt);
    const auto b = dae_forward(dae, x, xt);
    CHECK(a.representation.values == b.representation.values);
    CHECK(a.reconstruction == b.reconstruction);
    CHECK(a.loss.reconstruction == b.loss.reconstruction);
    CHECK(a.loss.total == b.loss.total);
    CHECK(a.representation.head_weights == Vector{1.0});
  }

  SUBCASE("identical heads give uniform weights and a scaled concatenation") {
    PretrainModel m = PretrainModel::initialize(small_config(ModelKind::macdae, 3, 6, 6));
    Matrix& w = param(m, "encoder.weight");
    Matrix& b = param(m, "encoder.bias");
    for (std::size_t k = 1; k < 3; ++k) {
      for (std::size_t r = 0; r < 2; ++r) {
        for (std::size_t j = 0; j < 6; ++j) {
          w(2 * k + r, j) = w(r, j);
        }
        b(2 * k + r, 0) = b(r, 0);
      }
    }
    const auto out = macdae_forward(m, x, xt);
    const Matrix heads = head_states(m, xt);
    for (double mu : out.representation.head_weights) {
      CHECK(mu == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    }
    for (std::size_t k = 0; k < 3; ++k) {
      for (std::size_t j = 0; j < 2; ++j) {
        CHECK(out.representation.values[2 * k + j] ==
              doctest::Approx(heads(k, j) / 3.0).epsilon(1e-14));
      }
    }
  }

  SUBCASE("reported penalty equals the standalone penalty on unweighted heads") {
    auto c = small_config(ModelKind::macdae, 4, 8, 6);
    c.penalty = 0.3;
    const PretrainModel m = PretrainModel::initialize(c);
    const auto out = macdae_forward(m, x, xt);
    const double expected =
        similarity_penalty(head_states(m, xt), 0.3, c.epsilon, PenaltyMode::raw);
    CHECK(out.loss.penalty == doctest::Approx(expected).epsilon(1e-14));
    CHECK(out.loss.total ==
          doctest::Approx(out.loss.reconstruction + out.loss.penalty).epsilon(1e-14));
  }
}

TEST_CASE("macdae head weights form a probability vector") {
  std::mt19937_64 gen(6);
  for (int trial = 0; trial < 50; ++trial) {
    auto c = small_config(ModelKind::macdae, 1 + trial % 4, 8, 7, trial);
    if (c.hidden_dim % c.heads != 0) {
      c.heads = 2;
    }
    PretrainModel m = PretrainModel::initialize(c);
    testing::randomize(m.parameters(), gen, 3.0);
    const Vector x = testing::random_vector(7, gen);
    const auto out = macdae_forward(m, x, x);
    double sum = 0.0;
    for (double w : out.representation.head_weights) {
      CHECK(w >= 0.0);
      sum += w;
    }
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }
}

TEST_CASE("pre-training gradients match finite differences") {
  std::mt19937_64 gen(7);
  const ModelKind kinds[] = {ModelKind::dae, ModelKind::vae, ModelKind::macdae};
  for (ModelKind kind : kinds) {
    for (std::size_t k : {1u, 2u, 4u}) {
      for (PenaltyMode mode : {PenaltyMode::raw, PenaltyMode::hinge}) {
        for (int trial = 0; trial < 4; ++trial) {
          CAPTURE(to_string(kind));
          CAPTURE(k);
          auto c = small_config(kind, k, 8, 5 + 3 * trial, 100 + trial);
          c.penalty = 0.2;
          c.epsilon = 0.3;
          c.penalty_mode = mode;
          c.pairs = trial % 2 ? PairConvention::all : PairConvention::unordered;
          PretrainModel m = PretrainModel::initialize(c);
          testing::randomize(m.parameters(), gen, 0.8);
          std::vector<Vector> batch;
          std::vector<ExampleNoise> noise;
          Rng rng(trial);
          for (int n = 0; n < 3; ++n) {
            batch.push_back(testing::random_vector(c.input_dim, gen));
            noise.push_back(draw_example_noise(m, batch.back(), rng));
          }
          TensorList grads = zeros_like(m.parameters());
          pretrain_loss(m, batch, noise, &grads);
          const Vector flat = testing::flatten(m.parameters());
          const auto f = [&](std::span<const double> p) {
            PretrainModel probe = m;
            testing::unflatten(p, probe.parameters());
            return pretrain_loss(probe, batch, noise, nullptr).total;
          };
          const Vector numeric = finite_diff_grad(f, flat, 1e-6);
          CHECK(gradient_relative_error(testing::flatten(grads), numeric) < 1e-4);
        }
      }
    }
  }
}

TEST_CASE("encoder input gradient matches finite differences") {
  std::mt19937_64 gen(17);
  for (ModelKind kind : {ModelKind::dae, ModelKind::vae, ModelKind::macdae}) {
    auto c = small_config(kind, 2, 6, 7);
    PretrainModel m = PretrainModel::initialize(c);
    testing::randomize(m.parameters(), gen, 1.0);
    const Vector x = testing::random_vector(7, gen);
    const Vector upstream = testing::random_vector(6, gen, -1, 1);
    const auto f = [&](std::span<const double> in) {
      const Representation r = extract_representation(m, in);
      double s = 0.0;
      for (std::size_t j = 0; j < r.values.size(); ++j) s += upstream[j] * r.values[j];
      return s;
    };
    const EncoderTrace trace = encode(m, x);
    Vector grad_x(7, 0.0);
    encode_backward(m, trace, EncoderGradient{upstream, {}, {}}, nullptr, grad_x);
    CHECK(gradient_relative_error(grad_x, finite_diff_grad(f, x, 1e-6)) < 1e-6);
  }
}

TEST_CASE("K = 1 MACDAE training reproduces DAE training") {
  const auto data = toy_dataset(100, 12, 3);
  auto cd = small_config(ModelKind::dae, 1, 6, 12, 21);
  auto cm = cd;
  cm.kind = ModelKind::macdae;
  cd.batch_size = cm.batch_size = 16;
  const auto d = pretrain_fit(data, cd);
  const auto m = pretrain_fit(data, cm);
  REQUIRE(d.trace.size() == 5);
  for (std::size_t e = 0; e < 5; ++e) {
    CHECK(std::abs(d.trace[e].loss.total - m.trace[e].loss.total) <= 1e-12);
  }
  for (std::size_t i = 0; i < 4; ++i) {
    const auto a = d.model.parameters()[i].value.values();
    const auto b = m.model.parameters()[i].value.values();
    for (std::size_t j = 0; j < a.size(); ++j) {
      CHECK(std::abs(a[j] - b[j]) <= 1e-12);
    }
  }
}

TEST_CASE("pretrain_fit") {
  const auto data = toy_dataset(100, 16, 4);

  SUBCASE("deterministic") {
    for (ModelKind kind : {ModelKind::dae, ModelKind::vae, ModelKind::macdae}) {
      const auto c = small_config(kind, 2, 8, 16, 5);
      CHECK(pretrain_fit(data, c).model == pretrain_fit(data, c).model);
    }
  }

  SUBCASE("loss decreases") {
    for (ModelKind kind : {ModelKind::dae, ModelKind::vae, ModelKind::macdae}) {
      auto c = small_config(kind, 2, 8, 16, 6);
      c.batch_size = 10;
      const auto r = pretrain_fit(data, c);
      REQUIRE(r.trace.size() == 5);
      CHECK(r.trace.back().loss.total < r.trace.front().loss.total);
    }
  }

  SUBCASE("the similarity penalty lowers inter-head cosine") {
    auto c = small_config(ModelKind::macdae, 2, 8, 16, 7);
    c.batch_size = 10;
    c.epochs = 20;
    c.penalty = 0.0;
    const auto free = pretrain_fit(data, c);
    c.penalty = 0.5;
    const auto constrained = pretrain_fit(data, c);
    const double a = head_cosine_stats(free.model, data).mean_cosine;
    const double b = head_cosine_stats(constrained.model, data).mean_cosine;
    CHECK(b < a);
  }

  SUBCASE("errors") {
    const auto c = small_config(ModelKind::dae, 2, 8, 16);
    CHECK_THROWS_AS(pretrain_fit(std::vector<Vector>{}, c), DataError);
    CHECK_THROWS_AS(pretrain_fit(std::vector<Vector>{Vector(3, 0.0)}, c), DimensionError);
  }
}

TEST_CASE("extract_representation") {
  std::mt19937_64 gen(10);
  const Vector x = testing::random_vector(9, gen);
  for (ModelKind kind : {ModelKind::dae, ModelKind::vae, ModelKind::macdae}) {
    for (std::size_t k : {1u, 2u, 4u}) {
      const PretrainModel m = PretrainModel::initialize(small_config(kind, k, 8, 9));
      const Representation r = extract_representation(m, x);
      CHECK(r.values.size() == 8);
      CHECK(r.kind == kind);
      CHECK(extract_representation(m, x).values == r.values);
      CHECK_THROWS_AS(extract_representation(m, Vector(4, 0.0)), DimensionError);
    }
  }
}

TEST_CASE("VAE extraction equals the mean of sampled codes") {
  std::mt19937_64 gen(12);
  PretrainModel m = PretrainModel::initialize(small_config(ModelKind::vae, 2, 6, 5));
  testing::randomize(m.parameters(), gen, 0.5);
  const Vector x = testing::random_vector(5, gen);
  const Vector mean = extract_representation(m, x).values;
  Vector avg(6, 0.0);
  Rng rng(99);
  const int samples = 10000;
  for (int s = 0; s < samples; ++s) {
    const auto r = vae_forward(m, x, rng);
    for (std::size_t j = 0; j < 6; ++j) avg[j] += r.z[j] / samples;
  }
  for (std::size_t j = 0; j < 6; ++j) {
    CHECK(std::abs(avg[j] - mean[j]) < 0.02);
  }
}
