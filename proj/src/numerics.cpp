#include "ctxrec/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ctxrec/error.hpp"

namespace ctxrec {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, Vector values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_) {
    throw DimensionError("matrix " + std::to_string(rows_) + "x" + std::to_string(cols_) +
                         " given " + std::to_string(values_.size()) + " values");
  }
}

void Matrix::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

TensorList zeros_like(const TensorList& tensors) {
  TensorList out;
  out.reserve(tensors.size());
  for (const auto& t : tensors) {
    out.push_back({t.name, Matrix(t.value.rows(), t.value.cols())});
  }
  return out;
}

const Matrix& find_tensor(const TensorList& tensors, std::string_view name) {
  for (const auto& t : tensors) {
    if (t.name == name) {
      return t.value;
    }
  }
  throw DataError("missing tensor '" + std::string(name) + "'");
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("dot: lengths " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += a[i] * b[i];
  }
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

Vector matvec(const Matrix& a, std::span<const double> x) {
  if (x.size() != a.cols()) {
    throw DimensionError("matvec: matrix has " + std::to_string(a.cols()) +
                         " columns, vector has " + std::to_string(x.size()));
  }
  Vector y(a.rows(), 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto row = a.row(r);
    double s = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) {
      s += row[c] * x[c];
    }
    y[r] = s;
  }
  return y;
}

Vector matvec_transposed(const Matrix& a, std::span<const double> x) {
  if (x.size() != a.rows()) {
    throw DimensionError("matvec_transposed: matrix has " + std::to_string(a.rows()) +
                         " rows, vector has " + std::to_string(x.size()));
  }
  Vector y(a.cols(), 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double xr = x[r];
    if (xr == 0.0) {
      continue;
    }
    const auto row = a.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      y[c] += row[c] * xr;
    }
  }
  return y;
}

void add_outer(Matrix& a, std::span<const double> u, std::span<const double> v, double scale) {
  if (u.size() != a.rows() || v.size() != a.cols()) {
    throw DimensionError("add_outer: shape mismatch");
  }
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double ur = scale * u[r];
    if (ur == 0.0) {
      continue;
    }
    auto row = a.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      row[c] += ur * v[c];
    }
  }
}

void axpy(double scale, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) {
    throw DimensionError("axpy: length mismatch");
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] += scale * x[i];
  }
}

double softplus(double z) {
  if (z > 0.0) {
    return z + std::log1p(std::exp(-z));
  }
  return std::log1p(std::exp(z));
}

void require_finite(std::span<const double> values, std::string_view what) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(what) + ": non-finite value");
    }
  }
}

Vector softmax(std::span<const double> logits) {
  if (logits.empty()) {
    throw DimensionError("softmax: empty input");
  }
  require_finite(logits, "softmax");
  const double peak = *std::max_element(logits.begin(), logits.end());
  Vector out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    total += out[i];
  }
  for (double& v : out) {
    v /= total;
  }
  return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("cosine_similarity: lengths differ");
  }
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) {
    throw DegenerateInputError("cosine_similarity: zero-norm vector");
  }
  const double c = dot(a, b) / (na * nb);
  return std::clamp(c, -1.0, 1.0);
}

void cosine_similarity_grad(std::span<const double> a, std::span<const double> b,
                            std::span<double> grad_a, std::span<double> grad_b, double scale) {
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) {
    throw DegenerateInputError("cosine_similarity: zero-norm vector");
  }
  const double inv = 1.0 / (na * nb);
  const double c = dot(a, b) * inv;
  // d cos / da = b / (|a||b|) - cos * a / |a|^2
  for (std::size_t i = 0; i < a.size(); ++i) {
    grad_a[i] += scale * (b[i] * inv - c * a[i] / (na * na));
    grad_b[i] += scale * (a[i] * inv - c * b[i] / (nb * nb));
  }
}

namespace {

void adam_update(std::span<double> params, std::span<const double> grads, double* m, double* v,
                 const AdamState& s, double correction1, double correction2) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g;
    v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g * g;
    const double m_hat = m[i] / correction1;
    const double v_hat = v[i] / correction2;
    params[i] -= s.learning_rate * m_hat / (std::sqrt(v_hat) + s.epsilon);
  }
}

}  // namespace

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
  adam_step(std::vector<std::span<double>>{params},
            std::vector<std::span<const double>>{grads}, state);
}

void adam_step(const std::vector<std::span<double>>& params,
               const std::vector<std::span<const double>>& grads, AdamState& state) {
  if (params.size() != grads.size()) {
    throw DimensionError("adam_step: parameter and gradient lists differ in length");
  }
  std::size_t total = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != grads[i].size()) {
      throw DimensionError("adam_step: parameter/gradient shape mismatch");
    }
    total += params[i].size();
  }
  if (total != state.first_moment.size() || total != state.second_moment.size()) {
    throw DimensionError("adam_step: state tracks " + std::to_string(state.first_moment.size()) +
                         " parameters, given " + std::to_string(total));
  }
  ++state.step;
  const auto t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    adam_update(params[i], grads[i], state.first_moment.data() + offset,
                state.second_moment.data() + offset, state, correction1, correction2);
    offset += params[i].size();
  }
}

Vector finite_diff_grad(const ScalarFunction& f, std::span<const double> x, double step) {
  if (!(step > 0.0)) {
    throw NumericError("finite_diff_grad: step must be positive");
  }
  Vector probe(x.begin(), x.end());
  Vector grad(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double original = probe[i];
    probe[i] = original + step;
    const double up = f(probe);
    probe[i] = original - step;
    const double down = f(probe);
    probe[i] = original;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_diff_grad: non-finite function value at coordinate " +
                         std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

double gradient_relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  if (analytic.size() != numeric.size()) {
    throw DimensionError("gradient_relative_error: lengths differ");
  }
  double diff = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double d = analytic[i] - numeric[i];
    diff += d * d;
  }
  diff = std::sqrt(diff);
  const double scale = std::max(norm(analytic), norm(numeric));
  if (scale < 1e-8) {
    return diff;
  }
  return diff / scale;
}

double Rng::normal() {
  // Box-Muller; 1 - uniform() lies in (0, 1] so the log is finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

std::size_t Rng::below(std::size_t n) {
  // Rejection sampling keeps the draw unbiased for any n.
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t draw = engine_();
  while (draw >= limit) {
    draw = engine_();
  }
  return static_cast<std::size_t>(draw % bound);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
  // FNV-1a over the tag, then a splitmix64 finalizer over the combination.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::uint64_t z = seed ^ h;
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace ctxrec
