#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "nailguard/pipeline.hpp"
#include "nailguard/taxonomy.hpp"
#include "nailguard/tensor.hpp"

namespace nailguard {

struct BackboneSpec {
  std::string id;
  int input_height = kInputSize;
  int input_width = kInputSize;
  int input_channels = kInputChannels;
  std::string gradcam_tap;  // last convolutional feature map
  int feature_channels = 0;
  bool pretrained = false;
  std::string provenance;
};

/// Throws ConfigError for ids outside {inception_v3, densenet201,
/// efficientnet_v2, resnet50, tiny_test}.
const BackboneSpec& backbone_spec(std::string_view id);
std::vector<std::string> backbone_ids();

struct Parameter {
  std::string name;
  std::vector<int> shape;
  std::vector<double> value;

  std::size_t size() const noexcept { return value.size(); }
};

/// Per-parameter gradient buffers, aligned with Classifier::parameters().
using ParamGrads = std::vector<std::vector<double>>;

/// Convolutional feature extractor. forward() returns the Grad-CAM tap
/// feature map; the classification head pools it globally.
class Backbone {
 public:
  /// Intermediate state a backward pass needs.
  struct Trace {
    virtual ~Trace() = default;
  };

  virtual ~Backbone() = default;
  virtual const BackboneSpec& spec() const = 0;
  virtual std::unique_ptr<Backbone> clone() const = 0;
  virtual std::vector<Parameter*> parameters() = 0;
  virtual std::vector<const Parameter*> parameters() const = 0;

  /// Workspace for forward/backward; reusing one across calls avoids
  /// reallocating the large intermediate buffers.
  virtual std::unique_ptr<Trace> make_trace() const = 0;

  /// Returns the tap feature map, stored inside `trace`.
  virtual const Tensor3& forward(const Tensor3& input, Trace& trace) const = 0;

  /// Backward pass for the most recent forward() on `trace`. Accumulates
  /// into `grads` (one buffer per parameter; an empty span skips parameter
  /// gradients) and, when non-null, writes the input gradient.
  virtual void backward(Trace& trace, const Tensor3& d_features, std::span<std::vector<double>> grads,
                        Tensor3* d_input) const = 0;
};

/// Source of pretrained feature extractors. The stock architectures are
/// not reimplemented here; a provider supplies them with their weights.
class WeightsProvider {
 public:
  virtual ~WeightsProvider() = default;
  virtual std::unique_ptr<Backbone> load(const BackboneSpec& spec) const = 0;
};

/// The desk-scale backbone: conv3x3x8 + ReLU, maxpool2, conv3x3x16 + ReLU,
/// maxpool2. Weights are He-normal with zero biases.
std::unique_ptr<Backbone> make_tiny_backbone(std::uint64_t init_seed);

using ProbRow = std::array<double, kNumCategories>;

struct ForwardResult {
  std::vector<ProbRow> logits;
  std::vector<ProbRow> probs;
};

enum class GradTarget { params, input, both };

struct LossAndGrads {
  double loss = 0.0;
  ParamGrads param_grads;           // empty when not requested
  std::vector<Tensor3> input_grads;  // empty when not requested
  ForwardResult outputs;
};

struct FeatureMapsAndGrads {
  Tensor3 activations;  // A: h x w x k at the Grad-CAM tap
  Tensor3 gradients;    // G: d logit[target] / dA
};

inline constexpr double kLogClamp = 1e-12;

ProbRow softmax(const ProbRow& logits);
/// First index of the maximum.
inline int argmax(const ProbRow& row) {
  return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}
/// -sum_j y_j log(p_j + 1e-12)
double cross_entropy(const ProbRow& probs, const ProbRow& one_hot_label);

/// Backbone + global average pooling + affine map to six logits + softmax.
/// The head starts at zero, i.e. at the uniform prediction.
class Classifier {
 public:
  Classifier(std::unique_ptr<Backbone> backbone, LabelTaxonomy taxonomy);
  Classifier(const Classifier& other);
  Classifier& operator=(const Classifier& other);
  Classifier(Classifier&&) noexcept = default;
  Classifier& operator=(Classifier&&) noexcept = default;

  const BackboneSpec& spec() const { return backbone_->spec(); }
  const LabelTaxonomy& taxonomy() const noexcept { return taxonomy_; }

  /// When frozen, only the head receives parameter gradients.
  bool backbone_frozen() const noexcept { return frozen_; }
  void set_backbone_frozen(bool frozen) noexcept { frozen_ = frozen; }

  /// Backbone parameters followed by head.weight (6 x k) and head.bias (6).
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::size_t parameter_count() const;
  Parameter& head_weight() noexcept { return head_weight_; }
  Parameter& head_bias() noexcept { return head_bias_; }

  /// Throws NumericError if a logit is not finite.
  ForwardResult forward(const ImageBatch& batch) const;
  ForwardResult forward(std::span<const Tensor3> images) const;
  ProbRow predict(const Tensor3& image) const;

  /// Mean cross-entropy over the batch and its exact gradients.
  LossAndGrads loss_and_grads(const ImageBatch& batch, GradTarget wrt) const;

  /// Tap activations and the gradient of the target logit with respect to them.
  FeatureMapsAndGrads activations_and_grads(const Tensor3& image, int target_category) const;

  const Backbone& backbone() const noexcept { return *backbone_; }

 private:
  struct HeadOut {
    std::vector<double> pooled;
    ProbRow logits;
  };
  HeadOut head_forward(const Tensor3& features) const;
  void check_input(const Tensor3& image) const;

  std::unique_ptr<Backbone> backbone_;
  LabelTaxonomy taxonomy_;
  Parameter head_weight_;
  Parameter head_bias_;
  bool frozen_ = false;
};

/// Builds a classifier. tiny_test is initialised from `init_seed`;
/// pretrained ids require a provider and never fall back to random weights.
Classifier build_classifier(const BackboneSpec& spec, std::uint64_t init_seed = 0,
                            const WeightsProvider* provider = nullptr);
Classifier build_classifier(std::string_view backbone_id, std::uint64_t init_seed = 0,
                            const WeightsProvider* provider = nullptr);

struct CheckpointMetadata {
  std::string backbone_id;
  std::vector<std::string> taxonomy;
  nlohmann::json preprocess = nlohmann::json::object();
  nlohmann::json training_config = nlohmann::json::object();
  nlohmann::json metrics = nlohmann::json::object();
  int epoch = 0;
};

nlohmann::json to_json(const CheckpointMetadata& meta);
CheckpointMetadata checkpoint_metadata_from_json(const nlohmann::json& j);
/// Empty string when valid, otherwise the first violation found.
std::string validate_checkpoint_metadata(const nlohmann::json& j);

struct LoadedCheckpoint {
  Classifier classifier;
  CheckpointMetadata metadata;
};

/// Writes <dir>/weights.bin and <dir>/metadata.json.
void save_checkpoint(const Classifier& classifier, const CheckpointMetadata& metadata,
                     const std::filesystem::path& dir);
/// Throws ConfigError if the stored taxonomy differs from `expected`.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir,
                                 const LabelTaxonomy& expected = LabelTaxonomy::canonical(),
                                 const WeightsProvider* provider = nullptr);

}  // namespace nailguard
