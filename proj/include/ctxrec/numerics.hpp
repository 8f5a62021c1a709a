#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ctxrec {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles. Biases are n x 1 matrices.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, Vector values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * cols_, cols_};
  }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  void fill(double v);
  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector values_;
};

/// A parameter tensor with a stable name, used for checkpoints and optimizers.
struct NamedTensor {
  std::string name;
  Matrix value;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

using TensorList = std::vector<NamedTensor>;

TensorList zeros_like(const TensorList& tensors);
const Matrix& find_tensor(const TensorList& tensors, std::string_view name);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

// y = A x
Vector matvec(const Matrix& a, std::span<const double> x);
// y = A^T x
Vector matvec_transposed(const Matrix& a, std::span<const double> x);
// A += scale * u v^T
void add_outer(Matrix& a, std::span<const double> u, std::span<const double> v,
               double scale = 1.0);
// y += scale * x
void axpy(double scale, std::span<const double> x, std::span<double> y);

inline double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double relu(double z) { return z > 0.0 ? z : 0.0; }

// log(1 + exp(z)) without overflow.
double softplus(double z);

/// Max-subtracted softmax. Throws DimensionError on empty input and
/// NumericError on non-finite logits.
Vector softmax(std::span<const double> logits);

/// Throws DegenerateInputError when either vector has zero norm.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Gradients of cos(a, b) with respect to a and b.
void cosine_similarity_grad(std::span<const double> a, std::span<const double> b,
                            std::span<double> grad_a, std::span<double> grad_b,
                            double scale = 1.0);

void require_finite(std::span<const double> values, std::string_view what);

struct AdamState {
  Vector first_moment;
  Vector second_moment;
  std::uint64_t step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  explicit AdamState(std::size_t parameter_count, double lr = 1e-3)
      : first_moment(parameter_count, 0.0),
        second_moment(parameter_count, 0.0),
        learning_rate(lr) {}
};

/// One bias-corrected Adam update over a flat parameter buffer.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

/// Same update over a list of buffers that share one state. The buffers are
/// laid out back to back inside the state's moment vectors.
void adam_step(const std::vector<std::span<double>>& params,
               const std::vector<std::span<const double>>& grads, AdamState& state);

using ScalarFunction = std::function<double(std::span<const double>)>;

/// Central-difference gradient estimate. Throws NumericError if f returns a
/// non-finite value.
Vector finite_diff_grad(const ScalarFunction& f, std::span<const double> x, double step);

/// ||a - b|| / max(||a||, ||b||). Returns the absolute difference norm when
/// both vectors are (near) zero.
double gradient_relative_error(std::span<const double> analytic,
                               std::span<const double> numeric);

/// Seeded random source. Everything stochastic in the library draws from
/// one of these, so runs are reproducible from the seed alone.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  // Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n);
  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }
  template <typename T>
  void shuffle(std::vector<T>& items) {
    shuffle(std::span<T>(items));
  }

 private:
  std::mt19937_64 engine_;
};

/// Mixes a stage tag into a master seed so that stages get independent streams.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

}  // namespace ctxrec
