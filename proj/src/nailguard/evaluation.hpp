#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "nailguard/models.hpp"
#include "nailguard/pipeline.hpp"

namespace nailguard {

/// counts[true][predicted]. Square, any size >= 1 (six for the taxonomy).
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int categories = kNumCategories);

  int size() const noexcept { return n_; }
  long long at(int truth, int predicted) const;
  void add(int truth, int predicted);

  long long row_sum(int i) const;
  long long col_sum(int j) const;
  long long trace() const;
  long long total() const;

  const std::vector<long long>& counts() const noexcept { return counts_; }

 private:
  int n_;
  std::vector<long long> counts_;
};

/// Throws InvalidArgument on length mismatch or a label outside [0, categories).
ConfusionMatrix confusion_matrix(const std::vector<int>& truth, const std::vector<int>& predicted,
                                 int categories = kNumCategories);

struct CategoryMetrics {
  std::string name;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long long support = 0;
};

struct EvaluationReport {
  ConfusionMatrix matrix;
  std::vector<CategoryMetrics> categories;
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
};

/// Zero denominators yield 0. `names` may be empty (six categories then
/// take the canonical names, other sizes their index) or hold one name per
/// row.
EvaluationReport classification_report(const ConfusionMatrix& m, const std::vector<std::string>& names = {});

struct Prediction {
  std::string sample_id;
  int truth = 0;
  int predicted = 0;
  ProbRow probs{};
};

struct EvaluationRun {
  EvaluationReport report;
  std::vector<Prediction> predictions;  // in test-partition order
};

/// Unaugmented, fixed-order pass over `test`.
EvaluationRun evaluate(const Classifier& classifier, const LabeledSet& test, const ImageSource& source,
                       std::size_t batch_size = kDefaultBatchSize);

struct ModelSummary {
  std::string name;
  std::optional<double> train_accuracy;
  std::optional<double> val_accuracy;
  double test_accuracy = 0.0;
  std::optional<double> macro_f1;
  bool reference = false;  // published figure, not produced by this build
};

ModelSummary summarize(const std::string& name, const EvaluationReport& report,
                       std::optional<double> train_accuracy = std::nullopt,
                       std::optional<double> val_accuracy = std::nullopt);

/// Published accuracies of the two fine-tuned backbones and of earlier
/// nail-disease classifiers. Stored constants; nothing here is recomputed.
const std::vector<ModelSummary>& reference_results();

/// Sorted by test accuracy descending, ties by name. Reference rows are
/// appended to the ranking when requested. Throws InvalidArgument when empty.
std::vector<ModelSummary> compare_models(std::vector<ModelSummary> models, bool include_reference = false);

nlohmann::json to_json(const ConfusionMatrix& m);
nlohmann::json to_json(const EvaluationReport& report);
nlohmann::json to_json(const EvaluationRun& run);
nlohmann::json to_json(const std::vector<ModelSummary>& table);

/// category,precision,recall,f1,support followed by macro and accuracy rows.
std::string report_csv(const EvaluationReport& report);
std::string confusion_csv(const EvaluationReport& report);
/// model,train_accuracy,val_accuracy,test_accuracy,macro_f1,reference
std::string comparison_csv(const std::vector<ModelSummary>& table);

}  // namespace nailguard
