#include "ctxrec/pretrain.hpp"

#include <cmath>
#include <numeric>

#include "ctxrec/error.hpp"

namespace ctxrec {

namespace {

// Parameter slots shared by all kinds.
constexpr std::size_t kEncoderWeight = 0;
constexpr std::size_t kEncoderBias = 1;
constexpr std::size_t kDecoderWeight = 2;
constexpr std::size_t kDecoderBias = 3;
// MACDAE
constexpr std::size_t kAttentionWeight = 4;
// VAE
constexpr std::size_t kLogvarWeight = 4;
constexpr std::size_t kLogvarBias = 5;

struct Slot {
  std::string name;
  std::size_t rows;
  std::size_t cols;
};

std::vector<Slot> parameter_slots(const PretrainConfig& c) {
  const std::size_t dh = c.hidden_dim;
  const std::size_t dm = c.input_dim;
  const bool vae = c.kind == ModelKind::vae;
  std::vector<Slot> slots = {
      {vae ? "encoder_mean.weight" : "encoder.weight", dh, dm},
      {vae ? "encoder_mean.bias" : "encoder.bias", dh, 1},
      {"decoder.weight", dm, dh},
      {"decoder.bias", dm, 1},
  };
  if (c.kind == ModelKind::macdae) {
    slots.push_back({"attention.weight", c.head_dim(), dm});
  } else if (vae) {
    slots.push_back({"encoder_logvar.weight", dh, dm});
    slots.push_back({"encoder_logvar.bias", dh, 1});
  }
  return slots;
}

void fill_xavier(Matrix& m, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : m.values()) {
    v = rng.uniform(-limit, limit);
  }
}

void require_kind(const PretrainModel& model, ModelKind expected, const char* op) {
  if (model.kind() != expected) {
    throw ConfigError("kind", std::string(op) + " requires a " + to_string(expected) +
                                  " model, got " + to_string(model.kind()));
  }
}

void require_input(const PretrainModel& model, std::span<const double> x) {
  if (x.size() != model.config().input_dim) {
    throw DimensionError("input has " + std::to_string(x.size()) + " entries, model expects " +
                         std::to_string(model.config().input_dim));
  }
}

double pair_term(double cosine, double lambda, double epsilon, PenaltyMode mode) {
  const double excess = cosine - epsilon;
  if (mode == PenaltyMode::hinge) {
    return excess > 0.0 ? lambda * excess : 0.0;
  }
  return lambda * excess;
}

// Per-example loss; gradients are accumulated with weight `scale`.
PretrainLossReport example_loss(const PretrainModel& model, std::span<const double> clean,
                                const ExampleNoise& noise, TensorList* grads, double scale) {
  const auto& cfg = model.config();
  const bool vae = cfg.kind == ModelKind::vae;
  const EncoderTrace trace =
      vae ? encode(model, clean, {}, noise.normal) : encode(model, clean, noise.corrupted);
  const Vector recon = decode(model, trace.code);

  PretrainLossReport report;
  for (std::size_t j = 0; j < clean.size(); ++j) {
    const double d = clean[j] - recon[j];
    report.reconstruction += d * d;
  }
  if (vae) {
    report.kl = gaussian_kl(trace.heads, trace.logvar);
  }
  Matrix heads;
  if (cfg.kind == ModelKind::macdae) {
    heads = pack_heads(trace.heads, cfg.heads);
    report.penalty = similarity_penalty(heads, cfg.penalty, cfg.epsilon, cfg.penalty_mode,
                                        cfg.pairs);
  }
  report.total = report.reconstruction + report.kl + report.penalty;

  if (grads == nullptr) {
    return report;
  }

  // Decoder: L = sum (x - x')^2, x' = sigmoid(o).
  Vector grad_out(clean.size());
  for (std::size_t j = 0; j < clean.size(); ++j) {
    grad_out[j] = scale * 2.0 * (recon[j] - clean[j]) * recon[j] * (1.0 - recon[j]);
  }
  add_outer((*grads)[kDecoderWeight].value, grad_out, trace.code);
  axpy(1.0, grad_out, (*grads)[kDecoderBias].value.values());

  EncoderGradient upstream;
  upstream.code = matvec_transposed(model.decoder_weight(), grad_out);
  if (vae) {
    upstream.heads.resize(trace.heads.size());
    upstream.logvar.resize(trace.logvar.size());
    for (std::size_t i = 0; i < trace.heads.size(); ++i) {
      upstream.heads[i] = scale * trace.heads[i];
      upstream.logvar[i] = scale * 0.5 * (std::exp(trace.logvar[i]) - 1.0);
    }
  } else if (cfg.kind == ModelKind::macdae && cfg.heads > 1) {
    Matrix grad_heads(heads.rows(), heads.cols());
    similarity_penalty_grad(heads, cfg.penalty, cfg.epsilon, cfg.penalty_mode, cfg.pairs,
                            grad_heads);
    upstream.heads.assign(grad_heads.values().begin(), grad_heads.values().end());
    for (double& g : upstream.heads) {
      g *= scale;
    }
  }
  encode_backward(model, trace, upstream, grads);
  return report;
}

}  // namespace

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::dae:
      return "dae";
    case ModelKind::vae:
      return "vae";
    case ModelKind::macdae:
      return "macdae";
  }
  return "unknown";
}

std::string to_string(PenaltyMode mode) { return mode == PenaltyMode::raw ? "raw" : "hinge"; }

std::string to_string(PairConvention pairs) {
  return pairs == PairConvention::unordered ? "unordered" : "all";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "dae") return ModelKind::dae;
  if (name == "vae") return ModelKind::vae;
  if (name == "macdae") return ModelKind::macdae;
  throw ConfigError("model", "unknown model kind '" + name + "' (expected dae, vae or macdae)");
}

PenaltyMode parse_penalty_mode(const std::string& name) {
  if (name == "raw") return PenaltyMode::raw;
  if (name == "hinge") return PenaltyMode::hinge;
  throw ConfigError("penalty_mode", "unknown penalty mode '" + name + "' (expected raw or hinge)");
}

PairConvention parse_pair_convention(const std::string& name) {
  if (name == "unordered") return PairConvention::unordered;
  if (name == "all") return PairConvention::all;
  throw ConfigError("pairs", "unknown pair convention '" + name + "' (expected unordered or all)");
}

void PretrainConfig::validate() const {
  if (heads == 0) {
    throw ConfigError("heads", "head count must be at least 1");
  }
  if (hidden_dim == 0 || hidden_dim % heads != 0) {
    throw ConfigError("hidden_dim", "hidden_dim " + std::to_string(hidden_dim) +
                                        " must be a positive multiple of heads " +
                                        std::to_string(heads));
  }
  if (input_dim == 0) {
    throw ConfigError("input_dim", "input_dim must be positive");
  }
  if (!(keep_probability >= 0.0 && keep_probability <= 1.0)) {
    throw ConfigError("keep_probability", "keep_probability must lie in [0, 1]");
  }
  if (!(penalty >= 0.0) || !std::isfinite(penalty)) {
    throw ConfigError("penalty", "penalty must be a finite value >= 0");
  }
  if (!(epsilon < 1.0)) {
    throw ConfigError("epsilon", "epsilon must be < 1");
  }
  if (epochs == 0) {
    throw ConfigError("epochs", "epochs must be positive");
  }
  if (batch_size == 0) {
    throw ConfigError("batch_size", "batch_size must be positive");
  }
  if (!(learning_rate > 0.0)) {
    throw ConfigError("learning_rate", "learning_rate must be positive");
  }
}

PretrainModel::PretrainModel(PretrainConfig config, TensorList params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  const auto slots = parameter_slots(config_);
  if (slots.size() != params_.size()) {
    throw DimensionError("expected " + std::to_string(slots.size()) + " tensors for a " +
                         to_string(config_.kind) + " model, got " +
                         std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto& t = params_[i];
    if (t.name != slots[i].name || t.value.rows() != slots[i].rows ||
        t.value.cols() != slots[i].cols) {
      throw DimensionError("tensor '" + t.name + "' " + std::to_string(t.value.rows()) + "x" +
                           std::to_string(t.value.cols()) + " does not match expected '" +
                           slots[i].name + "' " + std::to_string(slots[i].rows) + "x" +
                           std::to_string(slots[i].cols));
    }
  }
}

PretrainModel PretrainModel::initialize(const PretrainConfig& config) {
  config.validate();
  Rng rng(derive_seed(config.seed, "pretrain-init"));
  TensorList params;
  for (const auto& s : parameter_slots(config)) {
    params.push_back({s.name, Matrix(s.rows, s.cols)});
  }
  const std::size_t dm = config.input_dim;
  const std::size_t dh = config.hidden_dim;
  const std::size_t dk = config.head_dim();
  // Draw order is fixed: shared tensors first, kind-specific extras after.
  fill_xavier(params[kEncoderWeight].value, dm, dk, rng);
  fill_xavier(params[kDecoderWeight].value, dh, dm, rng);
  if (config.kind == ModelKind::macdae) {
    fill_xavier(params[kAttentionWeight].value, dm, dk, rng);
  } else if (config.kind == ModelKind::vae) {
    fill_xavier(params[kLogvarWeight].value, dm, dk, rng);
  }
  return PretrainModel(config, std::move(params));
}

const Matrix& PretrainModel::attention_weight() const {
  if (config_.kind != ModelKind::macdae) {
    throw ConfigError("kind", "attention weights exist only for macdae models");
  }
  return params_[kAttentionWeight].value;
}

const Matrix& PretrainModel::logvar_weight() const {
  if (config_.kind != ModelKind::vae) {
    throw ConfigError("kind", "log-variance encoder exists only for vae models");
  }
  return params_[kLogvarWeight].value;
}

const Matrix& PretrainModel::logvar_bias() const {
  if (config_.kind != ModelKind::vae) {
    throw ConfigError("kind", "log-variance encoder exists only for vae models");
  }
  return params_[kLogvarBias].value;
}

std::size_t PretrainModel::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& t : params_) {
    n += t.value.size();
  }
  return n;
}

Vector corrupt_mask(std::span<const double> x, double keep_probability, Rng& rng) {
  if (!(keep_probability >= 0.0 && keep_probability <= 1.0)) {
    throw ConfigError("keep_probability", "keep_probability must lie in [0, 1]");
  }
  Vector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = rng.bernoulli(keep_probability) ? x[i] : 0.0;
  }
  return out;
}

double gaussian_kl(std::span<const double> mean, std::span<const double> logvar) {
  if (mean.size() != logvar.size()) {
    throw DimensionError("gaussian_kl: mean and log-variance lengths differ");
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    kl += 0.5 * (mean[i] * mean[i] + std::exp(logvar[i]) - 1.0 - logvar[i]);
  }
  return kl;
}

Matrix pack_heads(std::span<const double> concatenated, std::size_t heads) {
  if (heads == 0 || concatenated.size() % heads != 0) {
    throw DimensionError("cannot split " + std::to_string(concatenated.size()) + " values into " +
                         std::to_string(heads) + " heads");
  }
  return Matrix(heads, concatenated.size() / heads,
                Vector(concatenated.begin(), concatenated.end()));
}

double similarity_penalty(const Matrix& heads, double lambda, double epsilon, PenaltyMode mode,
                          PairConvention pairs) {
  const std::size_t k = heads.rows();
  if (k == 0) {
    throw DimensionError("similarity_penalty: no heads");
  }
  for (std::size_t i = 0; i < k; ++i) {
    if (norm(heads.row(i)) == 0.0) {
      throw DegenerateInputError("similarity_penalty: head " + std::to_string(i) +
                                 " has zero norm");
    }
  }
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      total += pair_term(cosine_similarity(heads.row(i), heads.row(j)), lambda, epsilon, mode);
    }
  }
  if (pairs == PairConvention::all && k > 1) {
    total = 2.0 * total + static_cast<double>(k) * pair_term(1.0, lambda, epsilon, mode);
  }
  return total;
}

void similarity_penalty_grad(const Matrix& heads, double lambda, double epsilon,
                             PenaltyMode mode, PairConvention pairs, Matrix& grad) {
  if (!grad.same_shape(heads)) {
    throw DimensionError("similarity_penalty_grad: gradient shape mismatch");
  }
  const std::size_t k = heads.rows();
  // Self pairs have constant cosine and contribute nothing.
  const double multiplicity = pairs == PairConvention::all ? 2.0 : 1.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      if (mode == PenaltyMode::hinge &&
          !(cosine_similarity(heads.row(i), heads.row(j)) > epsilon)) {
        continue;
      }
      cosine_similarity_grad(heads.row(i), heads.row(j), grad.row(i), grad.row(j),
                             multiplicity * lambda);
    }
  }
}

Vector attention_weights(const PretrainModel& model, std::span<const double> clean,
                         const Matrix& heads) {
  require_kind(model, ModelKind::macdae, "attention_weights");
  require_input(model, clean);
  const auto& cfg = model.config();
  if (heads.rows() != cfg.heads || heads.cols() != cfg.head_dim()) {
    throw DimensionError("attention_weights: heads must be " + std::to_string(cfg.heads) + "x" +
                         std::to_string(cfg.head_dim()));
  }
  const Vector query = matvec(model.attention_weight(), clean);
  Vector logits(heads.rows());
  for (std::size_t k = 0; k < heads.rows(); ++k) {
    logits[k] = dot(query, heads.row(k));
  }
  return softmax(logits);
}

EncoderTrace encode(const PretrainModel& model, std::span<const double> clean,
                    std::span<const double> encoder_input, std::span<const double> noise) {
  require_input(model, clean);
  const auto& cfg = model.config();
  EncoderTrace t;
  t.clean.assign(clean.begin(), clean.end());
  t.input_is_clean = encoder_input.empty();
  if (t.input_is_clean) {
    t.encoder_input = t.clean;
  } else {
    require_input(model, encoder_input);
    t.encoder_input.assign(encoder_input.begin(), encoder_input.end());
  }

  t.heads = matvec(model.encoder_weight(), t.encoder_input);
  axpy(1.0, model.encoder_bias().values(), t.heads);

  switch (cfg.kind) {
    case ModelKind::dae:
      for (double& v : t.heads) {
        v = sigmoid(v);
      }
      t.code = t.heads;
      break;
    case ModelKind::macdae: {
      for (double& v : t.heads) {
        v = sigmoid(v);
      }
      const std::size_t dk = cfg.head_dim();
      t.query = matvec(model.attention_weight(), t.clean);
      Vector logits(cfg.heads);
      for (std::size_t k = 0; k < cfg.heads; ++k) {
        logits[k] = dot(t.query, std::span<const double>(t.heads).subspan(k * dk, dk));
      }
      t.weights = softmax(logits);
      t.code.resize(t.heads.size());
      for (std::size_t k = 0; k < cfg.heads; ++k) {
        for (std::size_t i = 0; i < dk; ++i) {
          t.code[k * dk + i] = t.weights[k] * t.heads[k * dk + i];
        }
      }
      break;
    }
    case ModelKind::vae: {
      t.logvar = matvec(model.logvar_weight(), t.encoder_input);
      axpy(1.0, model.logvar_bias().values(), t.logvar);
      require_finite(t.logvar, "vae log-variance");
      t.code = t.heads;
      if (!noise.empty()) {
        if (noise.size() != t.heads.size()) {
          throw DimensionError("vae noise must have hidden_dim entries");
        }
        t.noise.assign(noise.begin(), noise.end());
        for (std::size_t i = 0; i < t.code.size(); ++i) {
          t.code[i] += std::exp(0.5 * t.logvar[i]) * t.noise[i];
        }
      }
      break;
    }
  }
  return t;
}

void encode_backward(const PretrainModel& model, const EncoderTrace& trace,
                     const EncoderGradient& upstream, TensorList* grads,
                     std::span<double> grad_clean) {
  const auto& cfg = model.config();
  const std::size_t dh = cfg.hidden_dim;
  const std::size_t dk = cfg.head_dim();
  if (!grad_clean.empty() && grad_clean.size() != cfg.input_dim) {
    throw DimensionError("encode_backward: input gradient length mismatch");
  }
  auto at = [](const Vector& v, std::size_t i) { return v.empty() ? 0.0 : v[i]; };

  if (cfg.kind == ModelKind::vae) {
    Vector grad_mean(dh);
    Vector grad_logvar(dh);
    for (std::size_t i = 0; i < dh; ++i) {
      const double gc = at(upstream.code, i);
      grad_mean[i] = gc + at(upstream.heads, i);
      grad_logvar[i] = at(upstream.logvar, i);
      if (!trace.noise.empty()) {
        grad_logvar[i] += gc * trace.noise[i] * 0.5 * std::exp(0.5 * trace.logvar[i]);
      }
    }
    if (grads != nullptr) {
      add_outer((*grads)[kEncoderWeight].value, grad_mean, trace.encoder_input);
      axpy(1.0, grad_mean, (*grads)[kEncoderBias].value.values());
      add_outer((*grads)[kLogvarWeight].value, grad_logvar, trace.encoder_input);
      axpy(1.0, grad_logvar, (*grads)[kLogvarBias].value.values());
    }
    if (!grad_clean.empty()) {
      axpy(1.0, matvec_transposed(model.encoder_weight(), grad_mean), grad_clean);
      axpy(1.0, matvec_transposed(model.logvar_weight(), grad_logvar), grad_clean);
    }
    return;
  }

  // Gradient w.r.t. the unweighted sigmoid heads.
  Vector grad_heads(dh);
  if (cfg.kind == ModelKind::dae) {
    for (std::size_t i = 0; i < dh; ++i) {
      grad_heads[i] = at(upstream.code, i) + at(upstream.heads, i);
    }
  } else {
    const std::size_t k_heads = cfg.heads;
    Vector grad_weights(k_heads, 0.0);
    for (std::size_t k = 0; k < k_heads; ++k) {
      for (std::size_t i = 0; i < dk; ++i) {
        const std::size_t idx = k * dk + i;
        const double gc = at(upstream.code, idx);
        grad_heads[idx] = trace.weights[k] * gc + at(upstream.heads, idx);
        grad_weights[k] += gc * trace.heads[idx];
      }
    }
    // Softmax backward: ds_k = w_k (g_k - sum_j w_j g_j).
    const double mixed = dot(trace.weights, grad_weights);
    Vector grad_query(dk, 0.0);
    for (std::size_t k = 0; k < k_heads; ++k) {
      const double ds = trace.weights[k] * (grad_weights[k] - mixed);
      if (ds == 0.0) {
        continue;
      }
      for (std::size_t i = 0; i < dk; ++i) {
        grad_heads[k * dk + i] += ds * trace.query[i];
        grad_query[i] += ds * trace.heads[k * dk + i];
      }
    }
    if (grads != nullptr) {
      add_outer((*grads)[kAttentionWeight].value, grad_query, trace.clean);
    }
    if (!grad_clean.empty()) {
      axpy(1.0, matvec_transposed(model.attention_weight(), grad_query), grad_clean);
    }
  }

  Vector grad_pre(dh);
  for (std::size_t i = 0; i < dh; ++i) {
    const double h = trace.heads[i];
    grad_pre[i] = grad_heads[i] * h * (1.0 - h);
  }
  if (grads != nullptr) {
    add_outer((*grads)[kEncoderWeight].value, grad_pre, trace.encoder_input);
    axpy(1.0, grad_pre, (*grads)[kEncoderBias].value.values());
  }
  if (!grad_clean.empty() && trace.input_is_clean) {
    axpy(1.0, matvec_transposed(model.encoder_weight(), grad_pre), grad_clean);
  }
}

Vector decode(const PretrainModel& model, std::span<const double> code) {
  Vector out = matvec(model.decoder_weight(), code);
  const auto bias = model.decoder_bias().values();
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j] = sigmoid(out[j] + bias[j]);
  }
  return out;
}

ForwardResult dae_forward(const PretrainModel& model, std::span<const double> clean,
                          std::span<const double> corrupted) {
  require_kind(model, ModelKind::dae, "dae_forward");
  ForwardResult r;
  const EncoderTrace trace = encode(model, clean, corrupted);
  r.representation = {trace.code, {}, ModelKind::dae};
  r.reconstruction = decode(model, trace.code);
  r.loss = example_loss(model, clean, {Vector(corrupted.begin(), corrupted.end()), {}}, nullptr,
                        1.0);
  return r;
}

ForwardResult macdae_forward(const PretrainModel& model, std::span<const double> clean,
                             std::span<const double> corrupted) {
  require_kind(model, ModelKind::macdae, "macdae_forward");
  ForwardResult r;
  const EncoderTrace trace = encode(model, clean, corrupted);
  r.representation = {trace.code, trace.weights, ModelKind::macdae};
  r.reconstruction = decode(model, trace.code);
  r.loss = example_loss(model, clean, {Vector(corrupted.begin(), corrupted.end()), {}}, nullptr,
                        1.0);
  return r;
}

VaeForwardResult vae_forward(const PretrainModel& model, std::span<const double> clean,
                             std::span<const double> noise) {
  require_kind(model, ModelKind::vae, "vae_forward");
  VaeForwardResult r;
  const EncoderTrace trace = encode(model, clean, {}, noise);
  r.z = trace.code;
  r.reconstruction = decode(model, trace.code);
  r.loss = example_loss(model, clean, {{}, Vector(noise.begin(), noise.end())}, nullptr, 1.0);
  return r;
}

VaeForwardResult vae_forward(const PretrainModel& model, std::span<const double> clean, Rng& rng) {
  require_kind(model, ModelKind::vae, "vae_forward");
  const ExampleNoise noise = draw_example_noise(model, clean, rng);
  return vae_forward(model, clean, noise.normal);
}

ExampleNoise draw_example_noise(const PretrainModel& model, std::span<const double> clean,
                                Rng& rng) {
  ExampleNoise noise;
  if (model.kind() == ModelKind::vae) {
    noise.normal.resize(model.config().hidden_dim);
    for (double& v : noise.normal) {
      v = rng.normal();
    }
  } else {
    noise.corrupted = corrupt_mask(clean, model.config().keep_probability, rng);
  }
  return noise;
}

PretrainLossReport pretrain_loss(const PretrainModel& model, std::span<const Vector> batch,
                                 std::span<const ExampleNoise> noise, TensorList* grads) {
  if (batch.empty()) {
    throw DataError("pretrain_loss: empty batch");
  }
  if (noise.size() != batch.size()) {
    throw DimensionError("pretrain_loss: one noise entry per example required");
  }
  const double scale = 1.0 / static_cast<double>(batch.size());
  PretrainLossReport mean;
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const auto r = example_loss(model, batch[n], noise[n], grads, scale);
    mean.reconstruction += r.reconstruction * scale;
    mean.kl += r.kl * scale;
    mean.penalty += r.penalty * scale;
  }
  mean.total = mean.reconstruction + mean.kl + mean.penalty;
  return mean;
}

PretrainResult pretrain_fit(std::span<const Vector> dataset, const PretrainConfig& config) {
  config.validate();
  if (dataset.empty()) {
    throw DataError("pretrain_fit: empty pre-training dataset");
  }
  for (const auto& x : dataset) {
    if (x.size() != config.input_dim) {
      throw DimensionError("pretrain_fit: example has " + std::to_string(x.size()) +
                           " entries, input_dim is " + std::to_string(config.input_dim));
    }
  }

  PretrainResult result{PretrainModel::initialize(config), {}};
  PretrainModel& model = result.model;
  Rng rng(derive_seed(config.seed, "pretrain-train"));
  AdamState adam(model.parameter_count(), config.learning_rate);

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Vector> batch;
  std::vector<ExampleNoise> noise;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    PretrainLossReport sum;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      batch.clear();
      noise.clear();
      for (std::size_t n = start; n < stop; ++n) {
        batch.push_back(dataset[order[n]]);
        noise.push_back(draw_example_noise(model, batch.back(), rng));
      }
      TensorList grads = zeros_like(model.parameters());
      const auto loss = pretrain_loss(model, batch, noise, &grads);
      if (!std::isfinite(loss.total)) {
        throw NumericError("pretrain_fit: non-finite loss at epoch " + std::to_string(epoch + 1));
      }
      const auto weight = static_cast<double>(stop - start);
      sum.reconstruction += loss.reconstruction * weight;
      sum.kl += loss.kl * weight;
      sum.penalty += loss.penalty * weight;

      std::vector<std::span<double>> p;
      std::vector<std::span<const double>> g;
      for (std::size_t i = 0; i < grads.size(); ++i) {
        p.push_back(model.parameters()[i].value.values());
        g.push_back(grads[i].value.values());
      }
      adam_step(p, g, adam);
    }
    const auto n = static_cast<double>(order.size());
    EpochLoss e{epoch + 1, {sum.reconstruction / n, sum.kl / n, sum.penalty / n, 0.0}};
    e.loss.total = e.loss.reconstruction + e.loss.kl + e.loss.penalty;
    result.trace.push_back(e);
  }
  return result;
}

Representation extract_representation(const PretrainModel& model, std::span<const double> x) {
  const EncoderTrace trace = encode(model, x);
  return {trace.code, trace.weights, model.kind()};
}

Matrix head_states(const PretrainModel& model, std::span<const double> x) {
  const EncoderTrace trace = encode(model, x);
  return pack_heads(trace.heads, model.config().heads);
}

}  // namespace ctxrec
