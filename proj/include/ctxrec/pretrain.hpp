#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ctxrec/numerics.hpp"

namespace ctxrec {

enum class ModelKind { dae, vae, macdae };
enum class PenaltyMode { raw, hinge };
// unordered: pairs i < j. all: every ordered (i, j) including i == j.
enum class PairConvention { unordered, all };

std::string to_string(ModelKind kind);
std::string to_string(PenaltyMode mode);
std::string to_string(PairConvention pairs);
ModelKind parse_model_kind(const std::string& name);
PenaltyMode parse_penalty_mode(const std::string& name);
PairConvention parse_pair_convention(const std::string& name);

struct PretrainConfig {
  ModelKind kind = ModelKind::macdae;
  std::size_t heads = 4;
  std::size_t hidden_dim = 256;
  std::size_t input_dim = 0;
  // Probability that an input coordinate survives corruption.
  double keep_probability = 0.95;
  double penalty = 0.05;
  double epsilon = 0.75;
  PenaltyMode penalty_mode = PenaltyMode::raw;
  PairConvention pairs = PairConvention::unordered;
  std::size_t epochs = 5;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;

  std::size_t head_dim() const noexcept { return heads == 0 ? 0 : hidden_dim / heads; }
  /// Throws ConfigError naming the offending field.
  void validate() const;

  friend bool operator==(const PretrainConfig&, const PretrainConfig&) = default;
};

/// Parameters of one generative model.
///
/// The K per-head encoders are stored stacked: rows [k*d_k, (k+1)*d_k) of
/// the encoder weight and bias belong to head k. The VAE keeps a second
/// stacked encoder for the per-head log-variances. MACDAE adds the d_k x d_m
/// attention matrix that maps the clean input to the query.
class PretrainModel {
 public:
  PretrainModel() = default;
  /// Takes ownership of `params` after checking names and shapes against the config.
  PretrainModel(PretrainConfig config, TensorList params);

  /// Xavier-uniform weights and zero biases drawn from the config seed.
  static PretrainModel initialize(const PretrainConfig& config);

  const PretrainConfig& config() const noexcept { return config_; }
  ModelKind kind() const noexcept { return config_.kind; }
  TensorList& parameters() noexcept { return params_; }
  const TensorList& parameters() const noexcept { return params_; }

  const Matrix& encoder_weight() const { return params_[0].value; }
  const Matrix& encoder_bias() const { return params_[1].value; }
  const Matrix& decoder_weight() const { return params_[2].value; }
  const Matrix& decoder_bias() const { return params_[3].value; }
  // MACDAE only.
  const Matrix& attention_weight() const;
  // VAE only.
  const Matrix& logvar_weight() const;
  const Matrix& logvar_bias() const;

  std::size_t parameter_count() const noexcept;

  friend bool operator==(const PretrainModel&, const PretrainModel&) = default;

 private:
  PretrainConfig config_;
  TensorList params_;
};

struct Representation {
  Vector values;
  // MACDAE attention weights; empty for the other kinds.
  Vector head_weights;
  ModelKind kind = ModelKind::dae;
};

struct PretrainLossReport {
  double reconstruction = 0.0;
  double kl = 0.0;
  double penalty = 0.0;
  double total = 0.0;
};

struct EpochLoss {
  std::size_t epoch = 0;
  PretrainLossReport loss;
};

/// Intermediate values of one encoder pass, kept for the backward pass.
struct EncoderTrace {
  Vector clean;
  Vector encoder_input;  // masked input for DAE/MACDAE training, else the clean input
  bool input_is_clean = true;
  Vector heads;          // unweighted head activations (VAE: per-head means)
  Vector query;          // MACDAE
  Vector weights;        // MACDAE attention weights
  Vector logvar;         // VAE
  Vector noise;          // VAE reparameterization noise, empty on the mean path
  Vector code;           // what the decoder consumes
};

/// Upstream gradients flowing into an encoder pass. Empty members are zero.
struct EncoderGradient {
  Vector code;
  Vector heads;
  Vector logvar;
};

/// Runs the encoder. An empty `encoder_input` means the clean input is used;
/// an empty `noise` means the VAE takes its mean path.
EncoderTrace encode(const PretrainModel& model, std::span<const double> clean,
                    std::span<const double> encoder_input = {},
                    std::span<const double> noise = {});

/// Accumulates parameter gradients into `grads` (if non-null; same layout as
/// the model's parameters) and the gradient w.r.t. the clean input into
/// `grad_clean` (if non-empty).
void encode_backward(const PretrainModel& model, const EncoderTrace& trace,
                     const EncoderGradient& upstream, TensorList* grads,
                     std::span<double> grad_clean = {});

/// x' = sigmoid(W' code + b')
Vector decode(const PretrainModel& model, std::span<const double> code);

/// Keeps each coordinate with probability `keep_probability`, else zeroes it.
/// Kept coordinates are not rescaled.
Vector corrupt_mask(std::span<const double> x, double keep_probability, Rng& rng);

/// Closed-form KL( N(mean, diag(exp(logvar))) || N(0, I) ).
double gaussian_kl(std::span<const double> mean, std::span<const double> logvar);

/// Sum over head pairs of lambda * (cos - epsilon), or its hinge.
/// `heads` is K x d_k, one head per row.
double similarity_penalty(const Matrix& heads, double lambda, double epsilon, PenaltyMode mode,
                          PairConvention pairs = PairConvention::unordered);

/// Adds d(similarity_penalty)/d(heads) into `grad` (K x d_k).
void similarity_penalty_grad(const Matrix& heads, double lambda, double epsilon,
                             PenaltyMode mode, PairConvention pairs, Matrix& grad);

/// Softmax over Q . h_k with Q = W_a x.
Vector attention_weights(const PretrainModel& model, std::span<const double> clean,
                         const Matrix& heads);

/// Packs a concatenated hidden vector into a K x d_k matrix.
Matrix pack_heads(std::span<const double> concatenated, std::size_t heads);

struct ForwardResult {
  Representation representation;
  Vector reconstruction;
  PretrainLossReport loss;
};

struct VaeForwardResult {
  Vector z;
  Vector reconstruction;
  PretrainLossReport loss;
};

ForwardResult dae_forward(const PretrainModel& model, std::span<const double> clean,
                          std::span<const double> corrupted);
ForwardResult macdae_forward(const PretrainModel& model, std::span<const double> clean,
                             std::span<const double> corrupted);
VaeForwardResult vae_forward(const PretrainModel& model, std::span<const double> clean, Rng& rng);
VaeForwardResult vae_forward(const PretrainModel& model, std::span<const double> clean,
                             std::span<const double> noise);

/// Noise realised for one training example: the mask output for DAE/MACDAE
/// and the standard-normal draw for the VAE.
struct ExampleNoise {
  Vector corrupted;
  Vector normal;
};

ExampleNoise draw_example_noise(const PretrainModel& model, std::span<const double> clean,
                                Rng& rng);

/// Mean loss over a batch with its analytic gradient. `noise` holds one
/// entry per example. `grads` may be null.
PretrainLossReport pretrain_loss(const PretrainModel& model, std::span<const Vector> batch,
                                 std::span<const ExampleNoise> noise, TensorList* grads);

struct PretrainResult {
  PretrainModel model;
  std::vector<EpochLoss> trace;
};

/// Mini-batch Adam training. Shuffling, masking and VAE noise all come from
/// the config seed.
PretrainResult pretrain_fit(std::span<const Vector> dataset, const PretrainConfig& config);

/// Deterministic representation of a clean input: h for DAE, the weighted
/// h for MACDAE, the concatenated means for the VAE.
Representation extract_representation(const PretrainModel& model, std::span<const double> x);

/// Unweighted per-head states for a clean input, K x d_k.
Matrix head_states(const PretrainModel& model, std::span<const double> x);

}  // namespace ctxrec
