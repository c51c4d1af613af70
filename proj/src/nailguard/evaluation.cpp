#include "nailguard/evaluation.hpp"

#include <algorithm>
#include <sstream>

#include "nailguard/errors.hpp"
#include "nailguard/format.hpp"

using nlohmann::json;

namespace nailguard {

ConfusionMatrix::ConfusionMatrix(int categories) : n_(categories) {
  if (categories < 1) throw InvalidArgument("confusion matrix needs at least one category");
  counts_.assign(static_cast<std::size_t>(n_) * n_, 0);
}

long long ConfusionMatrix::at(int truth, int predicted) const {
  if (truth < 0 || truth >= n_ || predicted < 0 || predicted >= n_) {
    throw InvalidArgument("confusion matrix index out of range");
  }
  return counts_[static_cast<std::size_t>(truth) * n_ + predicted];
}

void ConfusionMatrix::add(int truth, int predicted) {
  if (truth < 0 || truth >= n_) throw InvalidArgument("true label " + std::to_string(truth) + " out of range");
  if (predicted < 0 || predicted >= n_) {
    throw InvalidArgument("predicted label " + std::to_string(predicted) + " out of range");
  }
  ++counts_[static_cast<std::size_t>(truth) * n_ + predicted];
}

long long ConfusionMatrix::row_sum(int i) const {
  long long s = 0;
  for (int j = 0; j < n_; ++j) s += at(i, j);
  return s;
}

long long ConfusionMatrix::col_sum(int j) const {
  long long s = 0;
  for (int i = 0; i < n_; ++i) s += at(i, j);
  return s;
}

long long ConfusionMatrix::trace() const {
  long long s = 0;
  for (int i = 0; i < n_; ++i) s += at(i, i);
  return s;
}

long long ConfusionMatrix::total() const {
  long long s = 0;
  for (long long c : counts_) s += c;
  return s;
}

ConfusionMatrix confusion_matrix(const std::vector<int>& truth, const std::vector<int>& predicted, int categories) {
  if (truth.size() != predicted.size()) {
    throw InvalidArgument("label sequences differ in length (" + std::to_string(truth.size()) + " vs " +
                          std::to_string(predicted.size()) + ")");
  }
  ConfusionMatrix m(categories);
  for (std::size_t k = 0; k < truth.size(); ++k) m.add(truth[k], predicted[k]);
  return m;
}

namespace {

double ratio(long long num, long long den) { return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den); }

}  // namespace

EvaluationReport classification_report(const ConfusionMatrix& m, const std::vector<std::string>& names) {
  if (m.total() <= 0) throw InvalidArgument("classification report needs at least one sample");
  if (!names.empty() && static_cast<int>(names.size()) != m.size()) {
    throw InvalidArgument("category names do not match the matrix size");
  }
  EvaluationReport r{m, {}, 0.0, 0.0, 0.0, 0.0};
  for (int j = 0; j < m.size(); ++j) {
    CategoryMetrics c;
    if (!names.empty()) {
      c.name = names[static_cast<std::size_t>(j)];
    } else {
      c.name = m.size() == kNumCategories ? LabelTaxonomy::canonical().name(j) : std::to_string(j);
    }
    c.support = m.row_sum(j);
    c.precision = ratio(m.at(j, j), m.col_sum(j));
    c.recall = ratio(m.at(j, j), c.support);
    const double pr = c.precision + c.recall;
    c.f1 = pr == 0.0 ? 0.0 : 2.0 * c.precision * c.recall / pr;
    r.macro_precision += c.precision;
    r.macro_recall += c.recall;
    r.macro_f1 += c.f1;
    r.categories.push_back(std::move(c));
  }
  const double n = static_cast<double>(m.size());
  r.macro_precision /= n;
  r.macro_recall /= n;
  r.macro_f1 /= n;
  r.accuracy = ratio(m.trace(), m.total());
  return r;
}

EvaluationRun evaluate(const Classifier& classifier, const LabeledSet& test, const ImageSource& source,
                       std::size_t batch_size) {
  if (test.empty()) throw InvalidArgument("test partition is empty");
  BatchStream stream = make_batches(test, Partition::test, batch_size, 0, source, AugmentationConfig::disabled());
  EvaluationRun run;
  std::vector<int> truth;
  std::vector<int> predicted;
  ImageBatch batch;
  while (stream.next(batch)) {
    const ForwardResult out = classifier.forward(batch);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      Prediction p{batch.sample_ids[i], batch.label_index(i), argmax(out.probs[i]), out.probs[i]};
      truth.push_back(p.truth);
      predicted.push_back(p.predicted);
      run.predictions.push_back(std::move(p));
    }
  }
  run.report = classification_report(confusion_matrix(truth, predicted), classifier.taxonomy().names());
  return run;
}

ModelSummary summarize(const std::string& name, const EvaluationReport& report, std::optional<double> train_accuracy,
                       std::optional<double> val_accuracy) {
  return ModelSummary{name, train_accuracy, val_accuracy, report.accuracy, report.macro_f1, false};
}

const std::vector<ModelSummary>& reference_results() {
  static const std::vector<ModelSummary> rows = {
      {"InceptionV3 (published)", 1.0, 0.9332, 0.9557, std::nullopt, true},
      {"DenseNet201 (published)", 1.0, 0.9347, 0.9479, std::nullopt, true},
      {"AE-CNN (prior work)", std::nullopt, std::nullopt, 0.918, std::nullopt, true},
      {"AE-VGG16 (prior work)", std::nullopt, std::nullopt, 0.835, std::nullopt, true},
      {"CNN (prior work)", std::nullopt, std::nullopt, 0.83, std::nullopt, true},
      {"DenseNet121 (prior work)", std::nullopt, std::nullopt, 0.813, std::nullopt, true},
      {"AE-ResNet50 (prior work)", std::nullopt, std::nullopt, 0.483, std::nullopt, true},
  };
  return rows;
}

std::vector<ModelSummary> compare_models(std::vector<ModelSummary> models, bool include_reference) {
  if (models.empty()) throw InvalidArgument("compare_models needs at least one report");
  if (include_reference) {
    const auto& ref = reference_results();
    models.insert(models.end(), ref.begin(), ref.end());
  }
  std::sort(models.begin(), models.end(), [](const ModelSummary& a, const ModelSummary& b) {
    if (a.test_accuracy != b.test_accuracy) return a.test_accuracy > b.test_accuracy;
    return a.name < b.name;
  });
  return models;
}

json to_json(const ConfusionMatrix& m) {
  json rows = json::array();
  for (int i = 0; i < m.size(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.size(); ++j) row.push_back(m.at(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json to_json(const EvaluationReport& report) {
  json cats = json::array();
  for (const auto& c : report.categories) {
    cats.push_back({{"category", c.name}, {"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}});
  }
  return {{"accuracy", report.accuracy},
          {"macro_precision", report.macro_precision},
          {"macro_recall", report.macro_recall},
          {"macro_f1", report.macro_f1},
          {"categories", cats},
          {"confusion_matrix", to_json(report.matrix)}};
}

json to_json(const EvaluationRun& run) {
  json preds = json::array();
  for (const auto& p : run.predictions) {
    preds.push_back({{"sample_id", p.sample_id}, {"true", p.truth}, {"predicted", p.predicted}, {"probs", p.probs}});
  }
  json j = to_json(run.report);
  j["predictions"] = std::move(preds);
  return j;
}

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string optional_csv(const std::optional<double>& v) { return v ? format_real(*v) : std::string(); }

}  // namespace

json to_json(const std::vector<ModelSummary>& table) {
  json rows = json::array();
  for (const auto& m : table) {
    rows.push_back({{"model", m.name},
                    {"train_accuracy", optional_json(m.train_accuracy)},
                    {"val_accuracy", optional_json(m.val_accuracy)},
                    {"test_accuracy", m.test_accuracy},
                    {"macro_f1", optional_json(m.macro_f1)},
                    {"reference", m.reference}});
  }
  return rows;
}

std::string report_csv(const EvaluationReport& report) {
  std::ostringstream out;
  out << "category,precision,recall,f1,support\n";
  for (const auto& c : report.categories) {
    out << c.name << ',' << format_real(c.precision) << ',' << format_real(c.recall) << ',' << format_real(c.f1) << ','
        << c.support << '\n';
  }
  out << "macro_avg," << format_real(report.macro_precision) << ',' << format_real(report.macro_recall) << ','
      << format_real(report.macro_f1) << ',' << report.matrix.total() << '\n';
  out << "accuracy,,,," << format_real(report.accuracy) << '\n';
  return out.str();
}

std::string confusion_csv(const EvaluationReport& report) {
  std::ostringstream out;
  out << "true\\predicted";
  for (const auto& c : report.categories) out << ',' << c.name;
  out << '\n';
  for (int i = 0; i < report.matrix.size(); ++i) {
    out << report.categories[static_cast<std::size_t>(i)].name;
    for (int j = 0; j < report.matrix.size(); ++j) out << ',' << report.matrix.at(i, j);
    out << '\n';
  }
  return out.str();
}

std::string comparison_csv(const std::vector<ModelSummary>& table) {
  std::ostringstream out;
  out << "model,train_accuracy,val_accuracy,test_accuracy,macro_f1,reference\n";
  for (const auto& m : table) {
    out << m.name << ',' << optional_csv(m.train_accuracy) << ',' << optional_csv(m.val_accuracy) << ','
        << format_real(m.test_accuracy) << ',' << optional_csv(m.macro_f1) << ',' << (m.reference ? "true" : "false")
        << '\n';
  }
  return out.str();
}

}  // namespace nailguard
