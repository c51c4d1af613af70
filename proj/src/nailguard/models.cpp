#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "nailguard/errors.hpp"
#include "nailguard/models.hpp"
#include "nailguard/random.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace nailguard {

namespace {

std::vector<BackboneSpec> make_specs() {
  auto keras = [](std::string id, std::string tap, int channels, std::string weights) {
    BackboneSpec s;
    s.id = std::move(id);
    s.gradcam_tap = std::move(tap);
    s.feature_channels = channels;
    s.pretrained = true;
    s.provenance = std::move(weights);
    return s;
  };
  std::vector<BackboneSpec> specs;
  specs.push_back(keras("inception_v3", "mixed10", 2048, "keras.applications InceptionV3, ImageNet weights"));
  specs.push_back(keras("densenet201", "relu", 1920, "keras.applications DenseNet201, ImageNet weights"));
  specs.push_back(keras("efficientnet_v2", "top_activation", 1280,
                        "keras.applications EfficientNetV2B0 (smallest variant), ImageNet weights"));
  specs.push_back(keras("resnet50", "conv5_block3_out", 2048, "keras.applications ResNet50, ImageNet weights"));
  BackboneSpec tiny;
  tiny.id = "tiny_test";
  tiny.gradcam_tap = "conv2_pool";
  tiny.feature_channels = 16;
  tiny.pretrained = false;
  tiny.provenance = "seeded He-normal initialisation";
  specs.push_back(tiny);
  return specs;
}

const std::vector<BackboneSpec>& all_specs() {
  static const std::vector<BackboneSpec> specs = make_specs();
  return specs;
}

bool all_finite(const ProbRow& row) {
  return std::all_of(row.begin(), row.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

const BackboneSpec& backbone_spec(std::string_view id) {
  for (const auto& s : all_specs()) {
    if (s.id == id) return s;
  }
  throw ConfigError("unknown backbone '" + std::string(id) +
                    "'; expected one of inception_v3, densenet201, efficientnet_v2, resnet50, tiny_test");
}

std::vector<std::string> backbone_ids() {
  std::vector<std::string> ids;
  for (const auto& s : all_specs()) ids.push_back(s.id);
  return ids;
}

ProbRow softmax(const ProbRow& logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  ProbRow p{};
  double sum = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    p[j] = std::exp(logits[j] - m);
    sum += p[j];
  }
  for (double& v : p) v /= sum;
  return p;
}

double cross_entropy(const ProbRow& probs, const ProbRow& one_hot_label) {
  double loss = 0.0;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    if (one_hot_label[j] != 0.0) loss -= one_hot_label[j] * std::log(probs[j] + kLogClamp);
  }
  return loss;
}

Classifier::Classifier(std::unique_ptr<Backbone> backbone, LabelTaxonomy taxonomy)
    : backbone_(std::move(backbone)), taxonomy_(std::move(taxonomy)) {
  if (!backbone_) throw ConfigError("classifier needs a backbone");
  const int k = backbone_->spec().feature_channels;
  // Zero head: training starts from the uniform prediction.
  head_weight_ = {"head.weight", {kNumCategories, k}, std::vector<double>(static_cast<std::size_t>(kNumCategories * k), 0.0)};
  head_bias_ = {"head.bias", {kNumCategories}, std::vector<double>(kNumCategories, 0.0)};
}

Classifier::Classifier(const Classifier& other)
    : backbone_(other.backbone_->clone()),
      taxonomy_(other.taxonomy_),
      head_weight_(other.head_weight_),
      head_bias_(other.head_bias_),
      frozen_(other.frozen_) {}

Classifier& Classifier::operator=(const Classifier& other) {
  if (this != &other) *this = Classifier(other);
  return *this;
}

std::vector<Parameter*> Classifier::parameters() {
  auto params = backbone_->parameters();
  params.push_back(&head_weight_);
  params.push_back(&head_bias_);
  return params;
}

std::vector<const Parameter*> Classifier::parameters() const {
  auto params = std::as_const(*backbone_).parameters();
  params.push_back(&head_weight_);
  params.push_back(&head_bias_);
  return params;
}

std::size_t Classifier::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->size();
  return n;
}

void Classifier::check_input(const Tensor3& image) const {
  const auto& s = spec();
  if (image.height != s.input_height || image.width != s.input_width || image.channels != s.input_channels) {
    throw InvalidArgument("input shape " + std::to_string(image.height) + "x" + std::to_string(image.width) + "x" +
                          std::to_string(image.channels) + " does not match " + std::to_string(s.input_height) +
                          "x" + std::to_string(s.input_width) + "x" + std::to_string(s.input_channels));
  }
}

Classifier::HeadOut Classifier::head_forward(const Tensor3& features) const {
  const int k = features.channels;
  HeadOut out;
  out.pooled.assign(static_cast<std::size_t>(k), 0.0);
  const std::size_t positions = static_cast<std::size_t>(features.height) * features.width;
  for (std::size_t p = 0; p < positions; ++p) {
    const double* f = features.data.data() + p * static_cast<std::size_t>(k);
    for (int c = 0; c < k; ++c) out.pooled[static_cast<std::size_t>(c)] += f[c];
  }
  for (double& v : out.pooled) v /= static_cast<double>(positions);
  for (int j = 0; j < kNumCategories; ++j) {
    double z = head_bias_.value[static_cast<std::size_t>(j)];
    const double* w = head_weight_.value.data() + static_cast<std::size_t>(j) * k;
    for (int c = 0; c < k; ++c) z += w[c] * out.pooled[static_cast<std::size_t>(c)];
    out.logits[static_cast<std::size_t>(j)] = z;
  }
  return out;
}

ForwardResult Classifier::forward(std::span<const Tensor3> images) const {
  ForwardResult result;
  auto trace = backbone_->make_trace();
  for (const auto& image : images) {
    check_input(image);
    const HeadOut h = head_forward(backbone_->forward(image, *trace));
    if (!all_finite(h.logits)) throw NumericError("non-finite logits in forward pass");
    result.logits.push_back(h.logits);
    result.probs.push_back(softmax(h.logits));
  }
  return result;
}

ForwardResult Classifier::forward(const ImageBatch& batch) const { return forward(std::span(batch.images)); }

ProbRow Classifier::predict(const Tensor3& image) const { return forward(std::span(&image, 1)).probs.front(); }

LossAndGrads Classifier::loss_and_grads(const ImageBatch& batch, GradTarget wrt) const {
  if (batch.size() == 0) throw InvalidArgument("empty batch");
  const bool want_params = wrt != GradTarget::input;
  const bool want_input = wrt != GradTarget::params;
  std::vector<int> targets(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) targets[i] = batch.label_index(i);

  auto params = parameters();
  LossAndGrads out;
  if (want_params) {
    out.param_grads.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      const bool head = i + 2 >= params.size();
      if (head || !frozen_) out.param_grads[i].assign(params[i]->size(), 0.0);
    }
  }
  const std::size_t n_backbone = params.size() - 2;
  std::span<std::vector<double>> backbone_grads =
      want_params && !frozen_ ? std::span(out.param_grads).first(n_backbone) : std::span<std::vector<double>>{};

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  const int k = spec().feature_channels;
  auto trace = backbone_->make_trace();
  Tensor3 d_features;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Tensor3& image = batch.images[i];
    check_input(image);
    const Tensor3& features = backbone_->forward(image, *trace);
    const HeadOut h = head_forward(features);
    if (!all_finite(h.logits)) throw NumericError("non-finite logits in forward pass");
    const ProbRow p = softmax(h.logits);
    out.outputs.logits.push_back(h.logits);
    out.outputs.probs.push_back(p);
    const auto t = static_cast<std::size_t>(targets[i]);
    out.loss += cross_entropy(p, batch.labels[i]) * inv_n;

    // d/dz of -log(p_t + c) through the softmax: s * (p - e_t), s = p_t / (p_t + c).
    const double s = p[t] / (p[t] + kLogClamp);
    ProbRow dz{};
    for (std::size_t j = 0; j < dz.size(); ++j) dz[j] = s * (p[j] - (j == t ? 1.0 : 0.0)) * inv_n;

    std::vector<double> d_pooled(static_cast<std::size_t>(k), 0.0);
    for (int j = 0; j < kNumCategories; ++j) {
      const double* w = head_weight_.value.data() + static_cast<std::size_t>(j) * k;
      for (int c = 0; c < k; ++c) d_pooled[static_cast<std::size_t>(c)] += w[c] * dz[static_cast<std::size_t>(j)];
    }
    if (want_params) {
      auto& gw = out.param_grads[n_backbone];
      auto& gb = out.param_grads[n_backbone + 1];
      for (int j = 0; j < kNumCategories; ++j) {
        gb[static_cast<std::size_t>(j)] += dz[static_cast<std::size_t>(j)];
        for (int c = 0; c < k; ++c) {
          gw[static_cast<std::size_t>(j * k + c)] += dz[static_cast<std::size_t>(j)] * h.pooled[static_cast<std::size_t>(c)];
        }
      }
    }
    if (backbone_grads.empty() && !want_input) continue;

    if (!d_features.same_shape(features)) d_features = Tensor3(features.height, features.width, k);
    const double inv_positions = 1.0 / (static_cast<double>(features.height) * features.width);
    for (std::size_t pos = 0; pos < static_cast<std::size_t>(features.height) * features.width; ++pos) {
      for (int c = 0; c < k; ++c) {
        d_features.data[pos * static_cast<std::size_t>(k) + static_cast<std::size_t>(c)] =
            d_pooled[static_cast<std::size_t>(c)] * inv_positions;
      }
    }
    Tensor3 d_input;
    backbone_->backward(*trace, d_features, backbone_grads, want_input ? &d_input : nullptr);
    if (want_input) out.input_grads.push_back(std::move(d_input));
  }
  return out;
}

FeatureMapsAndGrads Classifier::activations_and_grads(const Tensor3& image, int target_category) const {
  if (target_category < 0 || target_category >= kNumCategories) {
    throw InvalidArgument("target category outside 0..5: " + std::to_string(target_category));
  }
  if (spec().gradcam_tap.empty()) throw ConfigError("backbone " + spec().id + " has no Grad-CAM tap layer");
  check_input(image);
  FeatureMapsAndGrads out;
  auto trace = backbone_->make_trace();
  out.activations = backbone_->forward(image, *trace);
  const Tensor3& a = out.activations;
  if (a.height < 2 || a.width < 2) throw ConfigError("Grad-CAM tap resolves to a map smaller than 2x2");
  const int k = a.channels;
  const double inv_positions = 1.0 / (static_cast<double>(a.height) * a.width);
  out.gradients = Tensor3(a.height, a.width, k);
  const double* w = head_weight_.value.data() + static_cast<std::size_t>(target_category) * k;
  for (std::size_t pos = 0; pos < static_cast<std::size_t>(a.height) * a.width; ++pos) {
    for (int c = 0; c < k; ++c) out.gradients.data[pos * static_cast<std::size_t>(k) + static_cast<std::size_t>(c)] = w[c] * inv_positions;
  }
  return out;
}

Classifier build_classifier(const BackboneSpec& spec, std::uint64_t init_seed, const WeightsProvider* provider) {
  const BackboneSpec& known = backbone_spec(spec.id);
  if (!known.pretrained) {
    return Classifier(make_tiny_backbone(derive_seed(init_seed, 1)), LabelTaxonomy::canonical());
  }
  if (provider == nullptr) {
    throw ConfigError("pretrained weights for '" + known.id + "' are not available. Export " + known.provenance +
                      " as a feature extractor truncated at layer '" + known.gradcam_tap +
                      "' and register it through a WeightsProvider; random initialisation is never used for "
                      "pretrained backbones");
  }
  std::unique_ptr<Backbone> backbone = provider->load(known);
  if (!backbone) throw ConfigError("weights provider returned no backbone for '" + known.id + "'");
  return Classifier(std::move(backbone), LabelTaxonomy::canonical());
}

Classifier build_classifier(std::string_view backbone_id, std::uint64_t init_seed, const WeightsProvider* provider) {
  return build_classifier(backbone_spec(backbone_id), init_seed, provider);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kWeightsMagic[4] = {'N', 'G', 'W', '1'};

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("truncated weights file");
  return v;
}

}  // namespace

json to_json(const CheckpointMetadata& meta) {
  return {{"backbone_id", meta.backbone_id},   {"taxonomy", meta.taxonomy},
          {"preprocess", meta.preprocess},     {"training_config", meta.training_config},
          {"metrics", meta.metrics},           {"epoch", meta.epoch}};
}

std::string validate_checkpoint_metadata(const json& j) {
  if (!j.is_object()) return "metadata must be an object";
  auto require = [&](const char* key, auto predicate, const char* what) -> std::string {
    if (!j.contains(key)) return std::string("missing field '") + key + "'";
    if (!predicate(j.at(key))) return std::string("field '") + key + "' must be " + what;
    return {};
  };
  std::string err;
  if (!(err = require("backbone_id", [](const json& v) { return v.is_string(); }, "a string")).empty()) return err;
  if (!(err = require("taxonomy",
                      [](const json& v) {
                        return v.is_array() && v.size() == 6 &&
                               std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_string(); });
                      },
                      "an array of 6 strings"))
           .empty())
    return err;
  if (!(err = require("preprocess", [](const json& v) { return v.is_object(); }, "an object")).empty()) return err;
  if (!(err = require("training_config", [](const json& v) { return v.is_object(); }, "an object")).empty()) return err;
  if (!(err = require("metrics", [](const json& v) { return v.is_object(); }, "an object")).empty()) return err;
  if (!(err = require("epoch", [](const json& v) { return v.is_number_integer() && v.get<long long>() >= 0; },
                      "a non-negative integer"))
           .empty())
    return err;
  return {};
}

CheckpointMetadata checkpoint_metadata_from_json(const json& j) {
  if (auto err = validate_checkpoint_metadata(j); !err.empty()) throw ConfigError("invalid checkpoint metadata: " + err);
  CheckpointMetadata m;
  m.backbone_id = j.at("backbone_id").get<std::string>();
  m.taxonomy = j.at("taxonomy").get<std::vector<std::string>>();
  m.preprocess = j.at("preprocess");
  m.training_config = j.at("training_config");
  m.metrics = j.at("metrics");
  m.epoch = j.at("epoch").get<int>();
  return m;
}

void save_checkpoint(const Classifier& classifier, const CheckpointMetadata& metadata, const fs::path& dir) {
  fs::create_directories(dir);
  CheckpointMetadata meta = metadata;
  meta.backbone_id = classifier.spec().id;
  meta.taxonomy = classifier.taxonomy().names();
  {
    std::ofstream out(dir / "weights.bin", std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / "weights.bin").string());
    out.write(kWeightsMagic, sizeof(kWeightsMagic));
    const auto params = classifier.parameters();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
    for (const Parameter* p : params) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
      out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
      put<std::uint32_t>(out, static_cast<std::uint32_t>(p->shape.size()));
      for (int d : p->shape) put<std::int32_t>(out, d);
      put<std::uint64_t>(out, p->value.size());
      out.write(reinterpret_cast<const char*>(p->value.data()),
                static_cast<std::streamsize>(p->value.size() * sizeof(double)));
    }
    if (!out) throw IoError("failed writing weights to " + dir.string());
  }
  write_text_file(dir / "metadata.json", to_json(meta).dump(2) + "\n");
}

LoadedCheckpoint load_checkpoint(const fs::path& dir, const LabelTaxonomy& expected, const WeightsProvider* provider) {
  std::ifstream meta_in(dir / "metadata.json");
  if (!meta_in) throw NotFound("no checkpoint metadata in " + dir.string());
  json meta_json;
  try {
    meta_json = json::parse(meta_in);
  } catch (const json::parse_error& e) {
    throw ConfigError("unreadable checkpoint metadata: " + std::string(e.what()));
  }
  CheckpointMetadata meta = checkpoint_metadata_from_json(meta_json);
  if (meta.taxonomy != expected.names()) {
    throw ConfigError("checkpoint taxonomy does not match the expected category order");
  }

  Classifier classifier = build_classifier(meta.backbone_id, 0, provider);
  std::ifstream in(dir / "weights.bin", std::ios::binary);
  if (!in) throw NotFound("no weights blob in " + dir.string());
  char magic[4];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kWeightsMagic, sizeof(magic)) != 0) throw ConfigError("not a weights file");
  auto params = classifier.parameters();
  const auto count = get<std::uint32_t>(in);
  if (count != params.size()) throw ConfigError("weights file parameter count does not match the architecture");
  for (Parameter* p : params) {
    std::string name(get<std::uint32_t>(in), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    std::vector<int> shape(get<std::uint32_t>(in));
    for (int& d : shape) d = get<std::int32_t>(in);
    const auto n = get<std::uint64_t>(in);
    if (name != p->name || shape != p->shape || n != p->value.size()) {
      throw ConfigError("weights entry '" + name + "' does not match parameter '" + p->name + "'");
    }
    in.read(reinterpret_cast<char*>(p->value.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw IoError("truncated weights file");
  }
  return {std::move(classifier), std::move(meta)};
}

}  // namespace nailguard
