#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctxrec/features.hpp"
#include "ctxrec/numerics.hpp"
#include "ctxrec/pretrain.hpp"

namespace ctxrec {

enum class IntegrationMode { none, feature_based, fine_tune };

std::string to_string(IntegrationMode mode);
IntegrationMode parse_integration_mode(const std::string& name);

struct RankerConfig {
  std::vector<std::size_t> hidden = {256};
  IntegrationMode integration = IntegrationMode::none;
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  // User/item embeddings are updated together with the ranker.
  bool train_embeddings = true;

  void validate() const;
  friend bool operator==(const RankerConfig&, const RankerConfig&) = default;
};

/// Wide (linear over x) plus deep (ReLU MLP over concat(x, g(x))) scorer.
///
/// Tensors: wide.weight (1 x |x|), output.bias (1 x 1), deep.<l>.weight and
/// deep.<l>.bias per hidden layer, deep.out.weight (1 x last width).
class RankerModel {
 public:
  RankerModel() = default;
  RankerModel(RankerConfig config, FeatureSpace features, TensorList params,
              std::optional<PretrainModel> pretrained);

  /// Zero wide part, Xavier-uniform deep layers, zero biases.
  static RankerModel initialize(const RankerConfig& config, FeatureSpace features,
                                std::optional<PretrainModel> pretrained);

  const RankerConfig& config() const noexcept { return config_; }
  const FeatureSpace& features() const noexcept { return features_; }
  FeatureSpace& features() noexcept { return features_; }
  const TensorList& parameters() const noexcept { return params_; }
  TensorList& parameters() noexcept { return params_; }
  bool has_pretrained() const noexcept { return pretrained_.has_value(); }
  const PretrainModel& pretrained() const;
  PretrainModel& pretrained();

  std::size_t input_dim() const noexcept { return features_.input_dim(); }
  std::size_t representation_dim() const noexcept;
  std::size_t deep_input_dim() const noexcept { return input_dim() + representation_dim(); }

  friend bool operator==(const RankerModel&, const RankerModel&) = default;

 private:
  RankerConfig config_;
  FeatureSpace features_;
  TensorList params_;
  std::optional<PretrainModel> pretrained_;
};

/// sigmoid(wide(x) + deep(concat(x, representation))). The representation
/// must be present exactly when the model has a pre-trained encoder attached.
double wide_deep_score(const RankerModel& model, const InputVector& x,
                       const Representation* representation = nullptr);

/// Assembles x for the example, extracts g(x) if attached, and scores.
double score_example(const RankerModel& model, const Example& example);

struct RankerGradients {
  TensorList ranker;
  TensorList pretrain;  // empty unless fine-tuning
  Matrix users;         // empty unless embeddings are trained
  Matrix items;
};

RankerGradients zero_gradients(const RankerModel& model);

/// Mean binary cross-entropy over `batch` with its analytic gradient.
double ranker_loss(const RankerModel& model, std::span<const Example> batch,
                   RankerGradients* grads);

struct RankerResult {
  RankerModel model;
  std::vector<double> trace;  // mean training loss per epoch
};

/// Adam on binary cross-entropy. In feature_based mode the attached
/// pre-trained parameters are never written.
RankerResult ranker_fit(std::span<const Example> train, RankerModel init);

}  // namespace ctxrec
