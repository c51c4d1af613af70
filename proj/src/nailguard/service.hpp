#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "nailguard/explain.hpp"
#include "nailguard/models.hpp"

namespace nailguard {

/// Category -> urgency weight in [0, 1]; healthy_nail is always 0.
class SeverityWeights {
 public:
  /// Melanoma 1.0, blue finger 0.8, clubbing 0.6, onychogryphosis 0.4,
  /// pitting 0.3, healthy 0.0.
  static SeverityWeights defaults();

  /// Keys are category names (aliases accepted); missing categories keep
  /// their default. Throws ConfigError on out-of-range weights or a
  /// non-zero healthy weight.
  static SeverityWeights from_json(const nlohmann::json& j);

  double weight(int category) const { return w_.at(static_cast<std::size_t>(category)); }
  nlohmann::json to_json() const;

 private:
  std::array<double, kNumCategories> w_{};
};

/// weight[argmax] * max probability.
double priority_score(const ProbRow& probs, const SeverityWeights& weights);

enum class CaseStatus { pending, reviewed };
enum class ReviewDecision { confirm, override };

struct Review {
  ReviewDecision decision = ReviewDecision::confirm;
  std::optional<int> override_category;
  std::string note;
  std::string reviewed_at;
};

struct CasePrediction {
  int category = 0;
  ProbRow probs{};
  std::string model_id;
};

struct Case {
  std::string case_id;
  std::string image_ref;  // sha256 of the submitted bytes
  std::string submitted_at;
  std::uint64_t sequence = 0;
  CasePrediction prediction;
  double priority_score = 0.0;
  CaseStatus status = CaseStatus::pending;
  std::optional<Review> review;
};

nlohmann::json to_json(const Case& c, const LabelTaxonomy& taxonomy);

/// Pending first by score descending, then submitted_at, then case_id.
bool queue_before(const Case& a, const Case& b);

/// Append-only JSON-lines log plus content-addressed images under `root`.
/// The log is replayed on construction. Not thread-safe; NailService
/// serialises access.
class CaseStore {
 public:
  explicit CaseStore(std::filesystem::path root);

  /// Stores the bytes (idempotent) and returns their sha256.
  std::string put_image(std::span<const std::uint8_t> bytes);
  std::vector<std::uint8_t> image(const std::string& image_ref) const;

  void add(const Case& c);
  void set_review(const std::string& case_id, const Review& review);
  void record_activation(const std::string& model_id);

  const Case* find(const std::string& case_id) const;
  std::vector<Case> all() const;
  std::vector<Case> pending() const;
  std::uint64_t next_sequence() const noexcept { return next_sequence_; }
  const std::optional<std::string>& last_active_model() const noexcept { return last_active_; }

 private:
  void append(const nlohmann::json& event);
  void apply(const nlohmann::json& event);

  std::filesystem::path root_;
  std::map<std::string, Case> cases_;
  std::uint64_t next_sequence_ = 1;
  std::optional<std::string> last_active_;
};

struct ServiceConfig {
  std::filesystem::path store_dir;
  /// Each subdirectory holding weights.bin + metadata.json is a model.
  std::filesystem::path models_dir;
  SeverityWeights weights = SeverityWeights::defaults();
  int shapley_rows = 2;
  int shapley_cols = 4;
  Baseline shapley_baseline = Baseline::blur;
  double overlay_alpha = 0.4;
  /// ISO-8601 UTC timestamps; replaceable for tests.
  std::function<std::string()> clock;
};

struct ModelInfo {
  std::string id;
  std::string backbone_id;
  bool active = false;
  nlohmann::json metrics;
};

struct ReviewRequest {
  std::string decision;
  std::optional<std::string> override_category;
  std::string note;
};

struct Explanation {
  std::string case_id;
  AttributionMethod method = AttributionMethod::gradcam;
  int target = 0;
  std::string model_id;
  nlohmann::json attribution;
  std::vector<std::uint8_t> overlay_png;
};

/// Body of GET /cases/{id}/explanation.
nlohmann::json to_json(const Explanation& e);

std::string utc_timestamp_now();

/// Errors: DecodeError (undecodable upload), Unavailable (no active model),
/// NotFound, Conflict (second review), InvalidArgument (bad request).
class NailService {
 public:
  explicit NailService(ServiceConfig config);

  std::vector<ModelInfo> models() const;
  void activate_model(const std::string& model_id);
  /// Installs an in-memory classifier under `model_id` and activates it.
  void install_model(const std::string& model_id, Classifier classifier);
  std::optional<std::string> active_model() const;

  Case submit_case(std::span<const std::uint8_t> image_bytes);
  std::vector<Case> pending_queue() const;
  std::vector<Case> cases() const;
  Case get_case(const std::string& case_id) const;
  Case review_case(const std::string& case_id, const ReviewRequest& request);

  /// Cached per (case, method, target, model); repeats return the same bytes.
  /// `target` is a category name or index; absent means the predicted one.
  std::shared_ptr<const Explanation> explanation(const std::string& case_id, std::string_view method,
                                                 std::optional<std::string> target = std::nullopt);

  const LabelTaxonomy& taxonomy() const noexcept { return taxonomy_; }

 private:
  std::shared_ptr<const Classifier> active_classifier(std::string* model_id) const;
  std::shared_ptr<const Classifier> load_model(const std::string& model_id) const;

  ServiceConfig config_;
  LabelTaxonomy taxonomy_ = LabelTaxonomy::canonical();
  mutable std::mutex mutex_;
  CaseStore store_;
  std::map<std::string, std::shared_ptr<const Classifier>> installed_;
  std::string active_id_;
  std::shared_ptr<const Classifier> active_;
  std::map<std::string, std::shared_ptr<const Explanation>> explanation_cache_;
};

}  // namespace nailguard
