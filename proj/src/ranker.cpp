#include "ctxrec/ranker.hpp"

#include <cmath>
#include <numeric>

#include "ctxrec/error.hpp"

namespace ctxrec {

namespace {

constexpr std::size_t kWide = 0;
constexpr std::size_t kOutputBias = 1;
constexpr std::size_t kFirstDeep = 2;

struct Slot {
  std::string name;
  std::size_t rows;
  std::size_t cols;
};

std::vector<Slot> ranker_slots(const RankerConfig& config, std::size_t input_dim,
                               std::size_t deep_input_dim) {
  std::vector<Slot> slots = {{"wide.weight", 1, input_dim}, {"output.bias", 1, 1}};
  std::size_t width = deep_input_dim;
  for (std::size_t l = 0; l < config.hidden.size(); ++l) {
    const std::string prefix = "deep." + std::to_string(l);
    slots.push_back({prefix + ".weight", config.hidden[l], width});
    slots.push_back({prefix + ".bias", config.hidden[l], 1});
    width = config.hidden[l];
  }
  slots.push_back({"deep.out.weight", 1, width});
  return slots;
}

struct ForwardTrace {
  InputVector x;
  std::optional<EncoderTrace> encoder;
  // activations[0] is the deep input; activations[l + 1] the output of layer l.
  std::vector<Vector> activations;
  double logit = 0.0;
};

double forward_from_input(const RankerModel& model, const InputVector& x,
                          std::span<const double> representation,
                          std::vector<Vector>* activations) {
  const auto& params = model.parameters();
  const std::size_t layers = model.config().hidden.size();

  Vector input(x.values);
  input.insert(input.end(), representation.begin(), representation.end());

  double logit = dot(params[kWide].value.values(), x.values) + params[kOutputBias].value(0, 0);
  if (activations != nullptr) {
    activations->clear();
    activations->push_back(input);
  }
  Vector current = std::move(input);
  for (std::size_t l = 0; l < layers; ++l) {
    const Matrix& w = params[kFirstDeep + 2 * l].value;
    const Matrix& b = params[kFirstDeep + 2 * l + 1].value;
    Vector next = matvec(w, current);
    for (std::size_t i = 0; i < next.size(); ++i) {
      next[i] = relu(next[i] + b(i, 0));
    }
    current = std::move(next);
    if (activations != nullptr) {
      activations->push_back(current);
    }
  }
  logit += dot(params[kFirstDeep + 2 * layers].value.values(), current);
  return logit;
}

ForwardTrace forward_example(const RankerModel& model, const Example& example) {
  ForwardTrace t;
  t.x = model.features().assemble(example.user, example.item, example.side);
  std::span<const double> rep;
  if (model.has_pretrained()) {
    t.encoder = encode(model.pretrained(), t.x.values);
    rep = t.encoder->code;
  }
  t.logit = forward_from_input(model, t.x, rep, &t.activations);
  return t;
}

void check_label(double label) {
  if (label != 0.0 && label != 1.0) {
    throw DataError("ranker labels must be 0 or 1, got " + std::to_string(label));
  }
}

double example_loss(const RankerModel& model, const Example& example, RankerGradients* grads,
                    double scale) {
  check_label(example.label);
  const ForwardTrace t = forward_example(model, example);
  // -[y log s + (1 - y) log(1 - s)] with s = sigmoid(logit)
  const double loss = softplus(t.logit) - example.label * t.logit;
  if (grads == nullptr) {
    return loss;
  }

  const auto& params = model.parameters();
  const std::size_t layers = model.config().hidden.size();
  const double delta = scale * (sigmoid(t.logit) - example.label);

  axpy(delta, t.x.values, grads->ranker[kWide].value.values());
  grads->ranker[kOutputBias].value(0, 0) += delta;

  const std::size_t out_slot = kFirstDeep + 2 * layers;
  axpy(delta, t.activations[layers], grads->ranker[out_slot].value.values());
  Vector grad_act(params[out_slot].value.values().begin(), params[out_slot].value.values().end());
  for (double& g : grad_act) {
    g *= delta;
  }
  for (std::size_t l = layers; l-- > 0;) {
    const Vector& out = t.activations[l + 1];
    for (std::size_t i = 0; i < grad_act.size(); ++i) {
      if (out[i] <= 0.0) {
        grad_act[i] = 0.0;
      }
    }
    add_outer(grads->ranker[kFirstDeep + 2 * l].value, grad_act, t.activations[l]);
    axpy(1.0, grad_act, grads->ranker[kFirstDeep + 2 * l + 1].value.values());
    grad_act = matvec_transposed(params[kFirstDeep + 2 * l].value, grad_act);
  }

  const std::size_t dx = t.x.size();
  const bool embeddings = model.config().train_embeddings;
  Vector grad_x;
  if (embeddings) {
    grad_x.assign(grad_act.begin(), grad_act.begin() + static_cast<std::ptrdiff_t>(dx));
    axpy(delta, params[kWide].value.values(), grad_x);
  }
  if (t.encoder) {
    EncoderGradient upstream;
    upstream.code.assign(grad_act.begin() + static_cast<std::ptrdiff_t>(dx), grad_act.end());
    const bool fine_tune = model.config().integration == IntegrationMode::fine_tune;
    encode_backward(model.pretrained(), *t.encoder, upstream, fine_tune ? &grads->pretrain : nullptr,
                    grad_x);
  }
  if (embeddings) {
    model.features().accumulate_gradient(example.user, example.item, grad_x, grads->users,
                                         grads->items);
  }
  return loss;
}

}  // namespace

std::string to_string(IntegrationMode mode) {
  switch (mode) {
    case IntegrationMode::none:
      return "none";
    case IntegrationMode::feature_based:
      return "feature_based";
    case IntegrationMode::fine_tune:
      return "fine_tune";
  }
  return "unknown";
}

IntegrationMode parse_integration_mode(const std::string& name) {
  if (name == "none") return IntegrationMode::none;
  if (name == "feature_based") return IntegrationMode::feature_based;
  if (name == "fine_tune") return IntegrationMode::fine_tune;
  throw ConfigError("integration", "unknown integration mode '" + name +
                                       "' (expected none, feature_based or fine_tune)");
}

void RankerConfig::validate() const {
  for (std::size_t h : hidden) {
    if (h == 0) {
      throw ConfigError("hidden", "hidden layer sizes must be positive");
    }
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

RankerModel::RankerModel(RankerConfig config, FeatureSpace features, TensorList params,
                         std::optional<PretrainModel> pretrained)
    : config_(std::move(config)),
      features_(std::move(features)),
      params_(std::move(params)),
      pretrained_(std::move(pretrained)) {
  config_.validate();
  if ((config_.integration == IntegrationMode::none) == pretrained_.has_value()) {
    throw ConfigError("integration", "a pre-trained model must be attached exactly when the "
                                     "integration mode is not 'none'");
  }
  if (pretrained_ && pretrained_->config().input_dim != features_.input_dim()) {
    throw DimensionError("pre-trained model expects inputs of width " +
                         std::to_string(pretrained_->config().input_dim) +
                         ", feature space produces " + std::to_string(features_.input_dim()));
  }
  const auto slots = ranker_slots(config_, input_dim(), deep_input_dim());
  if (slots.size() != params_.size()) {
    throw DimensionError("ranker expects " + std::to_string(slots.size()) + " tensors, got " +
                         std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto& t = params_[i];
    if (t.name != slots[i].name || t.value.rows() != slots[i].rows ||
        t.value.cols() != slots[i].cols) {
      throw DimensionError("ranker tensor '" + t.name + "' does not match expected '" +
                           slots[i].name + "' " + std::to_string(slots[i].rows) + "x" +
                           std::to_string(slots[i].cols));
    }
  }
}

RankerModel RankerModel::initialize(const RankerConfig& config, FeatureSpace features,
                                    std::optional<PretrainModel> pretrained) {
  config.validate();
  const std::size_t rep = pretrained ? pretrained->config().hidden_dim : 0;
  const std::size_t dx = features.input_dim();
  Rng rng(derive_seed(config.seed, "ranker-init"));
  TensorList params;
  for (const auto& s : ranker_slots(config, dx, dx + rep)) {
    Matrix m(s.rows, s.cols);
    const bool deep_weight = s.name.starts_with("deep.") && s.name.ends_with(".weight");
    if (deep_weight) {
      const double limit = std::sqrt(6.0 / static_cast<double>(s.rows + s.cols));
      for (double& v : m.values()) {
        v = rng.uniform(-limit, limit);
      }
    }
    params.push_back({s.name, std::move(m)});
  }
  return RankerModel(config, std::move(features), std::move(params), std::move(pretrained));
}

const PretrainModel& RankerModel::pretrained() const {
  if (!pretrained_) {
    throw ConfigError("integration", "no pre-trained model attached");
  }
  return *pretrained_;
}

PretrainModel& RankerModel::pretrained() {
  if (!pretrained_) {
    throw ConfigError("integration", "no pre-trained model attached");
  }
  return *pretrained_;
}

std::size_t RankerModel::representation_dim() const noexcept {
  return pretrained_ ? pretrained_->config().hidden_dim : 0;
}

double wide_deep_score(const RankerModel& model, const InputVector& x,
                       const Representation* representation) {
  if (x.size() != model.input_dim()) {
    throw DimensionError("wide_deep_score: input has " + std::to_string(x.size()) +
                         " entries, model expects " + std::to_string(model.input_dim()));
  }
  if ((representation != nullptr) != model.has_pretrained()) {
    throw DimensionError(model.has_pretrained()
                             ? "wide_deep_score: model expects a representation"
                             : "wide_deep_score: model has no representation input");
  }
  std::span<const double> rep;
  if (representation != nullptr) {
    if (representation->values.size() != model.representation_dim()) {
      throw DimensionError("wide_deep_score: representation has " +
                           std::to_string(representation->values.size()) +
                           " entries, model expects " +
                           std::to_string(model.representation_dim()));
    }
    rep = representation->values;
  }
  return sigmoid(forward_from_input(model, x, rep, nullptr));
}

double score_example(const RankerModel& model, const Example& example) {
  const InputVector x = model.features().assemble(example.user, example.item, example.side);
  if (!model.has_pretrained()) {
    return wide_deep_score(model, x);
  }
  const Representation rep = extract_representation(model.pretrained(), x.values);
  return wide_deep_score(model, x, &rep);
}

RankerGradients zero_gradients(const RankerModel& model) {
  RankerGradients g;
  g.ranker = zeros_like(model.parameters());
  if (model.config().integration == IntegrationMode::fine_tune) {
    g.pretrain = zeros_like(model.pretrained().parameters());
  }
  if (model.config().train_embeddings) {
    const auto& f = model.features();
    g.users = Matrix(f.users.vocab_size(), f.users.dimension());
    g.items = Matrix(f.items.vocab_size(), f.items.dimension());
  }
  return g;
}

double ranker_loss(const RankerModel& model, std::span<const Example> batch,
                   RankerGradients* grads) {
  if (batch.empty()) {
    throw DataError("ranker_loss: empty batch");
  }
  const double scale = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& ex : batch) {
    total += example_loss(model, ex, grads, scale) * scale;
  }
  return total;
}

RankerResult ranker_fit(std::span<const Example> train, RankerModel init) {
  const RankerConfig& config = init.config();
  if (train.empty()) {
    throw DataError("ranker_fit: empty training set");
  }
  for (const auto& ex : train) {
    check_label(ex.label);
  }
  RankerResult result{std::move(init), {}};
  RankerModel& model = result.model;
  const bool fine_tune = config.integration == IntegrationMode::fine_tune;

  auto collect = [&](RankerGradients& g) {
    std::vector<std::span<double>> p;
    std::vector<std::span<const double>> d;
    for (std::size_t i = 0; i < g.ranker.size(); ++i) {
      p.push_back(model.parameters()[i].value.values());
      d.push_back(g.ranker[i].value.values());
    }
    if (fine_tune) {
      for (std::size_t i = 0; i < g.pretrain.size(); ++i) {
        p.push_back(model.pretrained().parameters()[i].value.values());
        d.push_back(g.pretrain[i].value.values());
      }
    }
    if (config.train_embeddings) {
      p.push_back(model.features().users.weights().values());
      d.push_back(g.users.values());
      p.push_back(model.features().items.weights().values());
      d.push_back(g.items.values());
    }
    return std::pair{p, d};
  };

  std::size_t total = 0;
  {
    RankerGradients probe = zero_gradients(model);
    for (const auto& span : collect(probe).first) {
      total += span.size();
    }
  }
  AdamState adam(total, config.learning_rate);
  Rng rng(derive_seed(config.seed, "ranker-train"));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Example> batch;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t n = start; n < stop; ++n) {
        batch.push_back(train[order[n]]);
      }
      RankerGradients grads = zero_gradients(model);
      const double loss = ranker_loss(model, batch, &grads);
      if (!std::isfinite(loss)) {
        throw NumericError("ranker_fit: non-finite loss at epoch " + std::to_string(epoch + 1));
      }
      sum += loss * static_cast<double>(stop - start);
      auto [p, d] = collect(grads);
      adam_step(p, d, adam);
    }
    result.trace.push_back(sum / static_cast<double>(order.size()));
  }
  return result;
}

}  // namespace ctxrec
