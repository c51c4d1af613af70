#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "nailguard/errors.hpp"
#include "nailguard/models.hpp"
#include "nailguard/pipeline.hpp"

namespace nailguard {

struct AdversarialConfig {
  double epsilon = 0.0;
  double mix_ratio = 0.5;  // weight of the FGSM half of every training batch
};

struct TrainingConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = kDefaultBatchSize;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int max_epochs = 200;
  int patience = 10;
  double min_delta = 1e-4;
  std::optional<AdversarialConfig> adversarial;
  std::uint64_t seed = 0;
  AugmentationConfig augmentation;

  void validate() const;
};

nlohmann::json to_json(const TrainingConfig& cfg);
TrainingConfig training_config_from_json(const nlohmann::json& j);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  int stopped_epoch = -1;

  const EpochRecord& best() const { return epochs.at(static_cast<std::size_t>(best_epoch)); }
};

nlohmann::json to_json(const TrainingHistory& history);
/// epoch,train_loss,train_acc,val_loss,val_acc
std::string history_csv(const TrainingHistory& history);

/// Patience counter over validation loss (lower is better). An epoch
/// counts as an improvement when it beats the last improving value by more
/// than min_delta. best_epoch tracks the lowest loss seen, which is the
/// epoch whose weights are restored.
class EarlyStopState {
 public:
  enum class Decision { keep_going, stop };

  explicit EarlyStopState(int patience = 10, double min_delta = 1e-4);

  Decision update(int epoch, double val_loss);

  double best_metric() const noexcept { return best_metric_; }
  int best_epoch() const noexcept { return best_epoch_; }
  int epochs_since_improvement() const noexcept { return since_improvement_; }
  int patience() const noexcept { return patience_; }

 private:
  int patience_;
  double min_delta_;
  double reference_;
  double best_metric_;
  int best_epoch_ = -1;
  int since_improvement_ = 0;
};

class AdamOptimizer {
 public:
  AdamOptimizer(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

  /// Parameters with an empty gradient buffer (frozen) are left untouched.
  void step(const std::vector<Parameter*>& params, const ParamGrads& grads);

 private:
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct EvalStats {
  double loss = 0.0;
  double accuracy = 0.0;
};

struct TrainingData {
  LabeledSet train;
  LabeledSet val;
  const ImageSource* source = nullptr;
  /// Replaces the validation pass when set; receives the epoch index.
  std::function<EvalStats(const Classifier&, int)> validator;
};

/// Thrown when the validation loss stops being finite.
class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(const std::string& what, TrainingHistory partial)
      : NumericError(what), history_(std::move(partial)) {}
  const TrainingHistory& history() const noexcept { return history_; }

 private:
  TrainingHistory history_;
};

struct FitResult {
  Classifier best;  // weights of the lowest-validation-loss epoch
  TrainingHistory history;
  CheckpointMetadata metadata;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

EvalStats evaluate_loss(const Classifier& classifier, const LabeledSet& set, const ImageSource& source,
                        std::size_t batch_size = kDefaultBatchSize);

/// One Adam step per batch, clean validation at every epoch end, early
/// stopping with best-weight restore. With config.adversarial set, each
/// batch is joined by its FGSM counterpart.
FitResult fit(Classifier classifier, const TrainingData& data, const TrainingConfig& config,
              const EpochCallback& on_epoch = {});

/// fit() with FGSM batch mixing; requires config.adversarial.
FitResult adversarial_fit(Classifier classifier, const TrainingData& data, const TrainingConfig& config,
                          const EpochCallback& on_epoch = {});

/// x' = clip(x + eps * sign(grad), 0, 1) with sign(0) = 0.
Tensor3 fgsm_step(const Tensor3& x, const Tensor3& grad, double epsilon);

/// FGSM against the classifier's own cross-entropy gradient.
ImageBatch fgsm(const Classifier& classifier, const ImageBatch& batch, double epsilon);

struct SweepRow {
  double epsilon = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  int optimal_epochs = 0;  // best_epoch + 1
  std::string error;       // non-empty when the run failed

  bool ok() const noexcept { return error.empty(); }
};

using ClassifierFactory = std::function<Classifier()>;

inline const std::vector<double> kDefaultEpsilons{0.0, 0.1, 0.12, 0.14, 0.16, 0.18, 0.2};

/// Trains a fresh classifier per epsilon. Failed runs are recorded and the
/// sweep continues.
std::vector<SweepRow> epsilon_sweep(const ClassifierFactory& factory, const TrainingData& data,
                                    const TrainingConfig& config, const std::vector<double>& epsilons,
                                    const std::function<void(const SweepRow&)>& on_row = {});

/// Highest val_accuracy, ties to the lower val_loss, then the earlier row.
std::optional<std::size_t> best_sweep_row(const std::vector<SweepRow>& rows);

/// epsilon,val_loss,val_accuracy,optimal_epochs
std::string sweep_csv(const std::vector<SweepRow>& rows);
nlohmann::json to_json(const std::vector<SweepRow>& rows);

struct HyperparameterGrid {
  std::vector<double> learning_rates{0.1, 0.01, 0.001, 0.0001};
  std::vector<std::size_t> batch_sizes{16, 32, 64};

  std::vector<TrainingConfig> expand(const TrainingConfig& base) const;
};

struct LeaderboardRow {
  double learning_rate = 0.0;
  std::size_t batch_size = 0;
  double best_val_accuracy = 0.0;
  double best_val_loss = 0.0;
  int best_epoch = -1;
  std::string error;

  bool ok() const noexcept { return error.empty(); }
};

struct HyperparameterSearchResult {
  TrainingConfig best;
  std::vector<LeaderboardRow> leaderboard;
};

class SweepFailed : public Error {
 public:
  SweepFailed(const std::string& what, std::vector<LeaderboardRow> leaderboard)
      : Error(what), leaderboard_(std::move(leaderboard)) {}
  const std::vector<LeaderboardRow>& leaderboard() const noexcept { return leaderboard_; }

 private:
  std::vector<LeaderboardRow> leaderboard_;
};

/// Index of the winning row: max best_val_accuracy, ties to the lower
/// learning rate, then the smaller batch.
std::optional<std::size_t> best_leaderboard_row(const std::vector<LeaderboardRow>& rows);

HyperparameterSearchResult hyperparameter_sweep(const ClassifierFactory& factory, const TrainingData& data,
                                                const TrainingConfig& base, const HyperparameterGrid& grid,
                                                const std::function<void(const LeaderboardRow&)>& on_row = {});

/// learning_rate,batch_size,best_val_accuracy,best_val_loss,best_epoch,error
std::string leaderboard_csv(const std::vector<LeaderboardRow>& rows);
nlohmann::json to_json(const std::vector<LeaderboardRow>& rows);

}  // namespace nailguard
