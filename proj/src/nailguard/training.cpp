#include "nailguard/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "nailguard/format.hpp"
#include "nailguard/random.hpp"

using nlohmann::json;

namespace nailguard {

void TrainingConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning_rate must be > 0");
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (max_epochs < 1) throw InvalidArgument("max_epochs must be >= 1");
  if (patience < 1) throw InvalidArgument("patience must be >= 1");
  if (!(min_delta >= 0.0)) throw InvalidArgument("min_delta must be >= 0");
  if (adversarial) {
    if (!(adversarial->epsilon >= 0.0 && adversarial->epsilon <= 1.0)) {
      throw InvalidArgument("epsilon must be in [0, 1]");
    }
    if (!(adversarial->mix_ratio >= 0.0 && adversarial->mix_ratio <= 1.0)) {
      throw InvalidArgument("mix_ratio must be in [0, 1]");
    }
  }
  augmentation.validate();
}

json to_json(const TrainingConfig& cfg) {
  json j = {{"learning_rate", cfg.learning_rate},
            {"batch_size", cfg.batch_size},
            {"optimizer", {{"name", "adam"}, {"beta1", cfg.beta1}, {"beta2", cfg.beta2}, {"epsilon", cfg.adam_epsilon}}},
            {"loss", "categorical_crossentropy"},
            {"max_epochs", cfg.max_epochs},
            {"patience", cfg.patience},
            {"min_delta", cfg.min_delta},
            {"monitor", "val_loss"},
            {"seed", cfg.seed},
            {"augmentation", to_json(cfg.augmentation)}};
  if (cfg.adversarial) {
    j["adversarial"] = {{"attack", "fgsm"}, {"epsilon", cfg.adversarial->epsilon}, {"mix_ratio", cfg.adversarial->mix_ratio}};
  } else {
    j["adversarial"] = nullptr;
  }
  return j;
}

TrainingConfig training_config_from_json(const json& j) {
  TrainingConfig cfg;
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    cfg.beta1 = o.value("beta1", cfg.beta1);
    cfg.beta2 = o.value("beta2", cfg.beta2);
    cfg.adam_epsilon = o.value("epsilon", cfg.adam_epsilon);
  }
  cfg.max_epochs = j.value("max_epochs", cfg.max_epochs);
  cfg.patience = j.value("patience", cfg.patience);
  cfg.min_delta = j.value("min_delta", cfg.min_delta);
  cfg.seed = j.value("seed", cfg.seed);
  if (j.contains("augmentation")) cfg.augmentation = augmentation_from_json(j.at("augmentation"));
  if (j.contains("adversarial") && j.at("adversarial").is_object()) {
    const auto& a = j.at("adversarial");
    cfg.adversarial = AdversarialConfig{a.value("epsilon", 0.0), a.value("mix_ratio", 0.5)};
  }
  cfg.validate();
  return cfg;
}

json to_json(const TrainingHistory& history) {
  json epochs = json::array();
  for (const auto& e : history.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"train_acc", e.train_acc},
                      {"val_loss", e.val_loss},
                      {"val_acc", e.val_acc}});
  }
  return {{"epochs", std::move(epochs)}, {"best_epoch", history.best_epoch}, {"stopped_epoch", history.stopped_epoch}};
}

std::string history_csv(const TrainingHistory& history) {
  std::ostringstream out;
  out << "epoch,train_loss,train_acc,val_loss,val_acc\n";
  for (const auto& e : history.epochs) {
    out << e.epoch << ',' << format_real(e.train_loss) << ',' << format_real(e.train_acc) << ','
        << format_real(e.val_loss) << ',' << format_real(e.val_acc) << '\n';
  }
  return out.str();
}

EarlyStopState::EarlyStopState(int patience, double min_delta)
    : patience_(patience),
      min_delta_(min_delta),
      reference_(std::numeric_limits<double>::infinity()),
      best_metric_(std::numeric_limits<double>::infinity()) {
  if (patience < 1) throw InvalidArgument("patience must be >= 1");
}

EarlyStopState::Decision EarlyStopState::update(int epoch, double val_loss) {
  if (val_loss < best_metric_) {
    best_metric_ = val_loss;
    best_epoch_ = epoch;
  }
  if (val_loss < reference_ - min_delta_) {
    reference_ = val_loss;
    since_improvement_ = 0;
  } else {
    ++since_improvement_;
  }
  return since_improvement_ >= patience_ ? Decision::stop : Decision::keep_going;
}

AdamOptimizer::AdamOptimizer(double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

void AdamOptimizer::step(const std::vector<Parameter*>& params, const ParamGrads& grads) {
  if (grads.size() != params.size()) throw InvalidArgument("gradient count does not match parameters");
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].empty()) continue;
    auto& w = params[i]->value;
    if (m_[i].empty()) {
      m_[i].assign(w.size(), 0.0);
      v_[i].assign(w.size(), 0.0);
    }
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double g = grads[i][k];
      m_[i][k] = beta1_ * m_[i][k] + (1.0 - beta1_) * g;
      v_[i][k] = beta2_ * v_[i][k] + (1.0 - beta2_) * g * g;
      w[k] -= lr_ * (m_[i][k] / c1) / (std::sqrt(v_[i][k] / c2) + eps_);
    }
  }
}

namespace {

std::size_t count_correct(const ForwardResult& out, const ImageBatch& batch) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (argmax(out.probs[i]) == batch.label_index(i)) ++correct;
  }
  return correct;
}

ImageBatch fgsm_from_grads(const ImageBatch& batch, const std::vector<Tensor3>& grads, double epsilon) {
  ImageBatch adv = batch;
  for (std::size_t i = 0; i < adv.size(); ++i) adv.images[i] = fgsm_step(batch.images[i], grads[i], epsilon);
  return adv;
}

FitResult run_training(Classifier classifier, const TrainingData& data, const TrainingConfig& config,
                       const EpochCallback& on_epoch) {
  config.validate();
  if (data.source == nullptr) throw InvalidArgument("training data has no image source");
  if (data.train.empty()) throw InvalidArgument("training partition is empty");
  if (data.val.empty()) throw InvalidArgument("validation partition is empty");

  const double epsilon = config.adversarial ? config.adversarial->epsilon : 0.0;
  const double adv_weight = config.adversarial ? config.adversarial->mix_ratio : 0.0;

  AdamOptimizer optimizer(config.learning_rate, config.beta1, config.beta2, config.adam_epsilon);
  EarlyStopState stopper(config.patience, config.min_delta);
  TrainingHistory history;
  Classifier best = classifier;

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    const std::uint64_t epoch_seed = derive_seed(config.seed, static_cast<std::uint64_t>(epoch));
    BatchStream stream = make_batches(data.train, Partition::train, config.batch_size, epoch_seed, *data.source,
                                      config.augmentation);
    double loss_sum = 0.0;
    double seen = 0.0;
    double correct = 0.0;
    ImageBatch batch;
    while (stream.next(batch)) {
      auto params = classifier.parameters();
      const auto n = static_cast<double>(batch.size());
      if (epsilon > 0.0) {
        // The clean pass supplies both the parameter gradient of the clean
        // half and the input gradient that drives the FGSM half.
        LossAndGrads clean = classifier.loss_and_grads(batch, GradTarget::both);
        const ImageBatch adv = fgsm_from_grads(batch, clean.input_grads, epsilon);
        LossAndGrads attacked = classifier.loss_and_grads(adv, GradTarget::params);
        for (std::size_t p = 0; p < clean.param_grads.size(); ++p) {
          auto& g = clean.param_grads[p];
          for (std::size_t k = 0; k < g.size(); ++k) {
            g[k] = (1.0 - adv_weight) * g[k] + adv_weight * attacked.param_grads[p][k];
          }
        }
        optimizer.step(params, clean.param_grads);
        loss_sum += ((1.0 - adv_weight) * clean.loss + adv_weight * attacked.loss) * n;
        correct += (1.0 - adv_weight) * static_cast<double>(count_correct(clean.outputs, batch)) +
                   adv_weight * static_cast<double>(count_correct(attacked.outputs, adv));
      } else {
        LossAndGrads lg = classifier.loss_and_grads(batch, GradTarget::params);
        optimizer.step(params, lg.param_grads);
        loss_sum += lg.loss * n;
        correct += static_cast<double>(count_correct(lg.outputs, batch));
      }
      seen += n;
    }

    EvalStats val{std::numeric_limits<double>::quiet_NaN(), 0.0};
    try {
      val = data.validator ? data.validator(classifier, epoch)
                           : evaluate_loss(classifier, data.val, *data.source, config.batch_size);
    } catch (const NumericError&) {
    }
    EpochRecord record{epoch, loss_sum / seen, correct / seen, val.loss, val.accuracy};
    history.epochs.push_back(record);
    history.stopped_epoch = epoch;
    if (!std::isfinite(val.loss)) {
      history.best_epoch = stopper.best_epoch();
      throw TrainingDiverged("validation loss became non-finite at epoch " + std::to_string(epoch), history);
    }
    if (on_epoch) on_epoch(record);

    const auto decision = stopper.update(epoch, val.loss);
    if (stopper.best_epoch() == epoch) best = classifier;
    if (decision == EarlyStopState::Decision::stop) break;
  }
  history.best_epoch = stopper.best_epoch();

  const EpochRecord& b = history.best();
  CheckpointMetadata meta;
  meta.backbone_id = best.spec().id;
  meta.taxonomy = best.taxonomy().names();
  meta.preprocess = {{"input_size", {kInputSize, kInputSize, kInputChannels}},
                     {"scale", "unit_interval"},
                     {"resize", "bilinear"},
                     {"augmentation", to_json(config.augmentation)}};
  meta.training_config = to_json(config);
  meta.metrics = {{"best_val_loss", b.val_loss},
                  {"best_val_accuracy", b.val_acc},
                  {"train_loss", b.train_loss},
                  {"train_accuracy", b.train_acc}};
  meta.epoch = history.best_epoch;
  return {std::move(best), std::move(history), std::move(meta)};
}

}  // namespace

EvalStats evaluate_loss(const Classifier& classifier, const LabeledSet& set, const ImageSource& source,
                        std::size_t batch_size) {
  if (set.empty()) throw InvalidArgument("cannot evaluate an empty partition");
  BatchStream stream = make_batches(set, Partition::val, batch_size, 0, source, AugmentationConfig::disabled());
  double loss = 0.0;
  double correct = 0.0;
  ImageBatch batch;
  while (stream.next(batch)) {
    const ForwardResult out = classifier.forward(batch);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      loss += cross_entropy(out.probs[i], batch.labels[i]);
      if (argmax(out.probs[i]) == batch.label_index(i)) correct += 1.0;
    }
  }
  const auto n = static_cast<double>(set.size());
  return {loss / n, correct / n};
}

FitResult fit(Classifier classifier, const TrainingData& data, const TrainingConfig& config,
              const EpochCallback& on_epoch) {
  return run_training(std::move(classifier), data, config, on_epoch);
}

FitResult adversarial_fit(Classifier classifier, const TrainingData& data, const TrainingConfig& config,
                          const EpochCallback& on_epoch) {
  if (!config.adversarial) throw InvalidArgument("adversarial_fit requires an epsilon");
  return run_training(std::move(classifier), data, config, on_epoch);
}

Tensor3 fgsm_step(const Tensor3& x, const Tensor3& grad, double epsilon) {
  if (!x.same_shape(grad)) throw InvalidArgument("FGSM gradient shape does not match the image");
  if (!(epsilon >= 0.0)) throw InvalidArgument("epsilon must be >= 0");
  if (epsilon == 0.0) return x;
  Tensor3 out = x;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double g = grad.data[i];
    const double s = g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0);
    double v = std::clamp(x.data[i] + epsilon * s, 0.0, 1.0);
    // Rounding of x + eps may overshoot the budget by an ulp.
    while (std::abs(v - x.data[i]) > epsilon) v = std::nextafter(v, x.data[i]);
    out.data[i] = v;
  }
  return out;
}

ImageBatch fgsm(const Classifier& classifier, const ImageBatch& batch, double epsilon) {
  if (!(epsilon >= 0.0)) throw InvalidArgument("epsilon must be >= 0");
  if (epsilon == 0.0 || batch.size() == 0) return batch;
  const LossAndGrads lg = classifier.loss_and_grads(batch, GradTarget::input);
  return fgsm_from_grads(batch, lg.input_grads, epsilon);
}

std::vector<SweepRow> epsilon_sweep(const ClassifierFactory& factory, const TrainingData& data,
                                    const TrainingConfig& config, const std::vector<double>& epsilons,
                                    const std::function<void(const SweepRow&)>& on_row) {
  if (epsilons.empty()) throw InvalidArgument("epsilon list is empty");
  std::vector<SweepRow> rows;
  for (double eps : epsilons) {
    SweepRow row;
    row.epsilon = eps;
    try {
      TrainingConfig cfg = config;
      cfg.adversarial = AdversarialConfig{eps, config.adversarial ? config.adversarial->mix_ratio : 0.5};
      FitResult result = adversarial_fit(factory(), data, cfg);
      const EpochRecord& best = result.history.best();
      row.val_loss = best.val_loss;
      row.val_accuracy = best.val_acc;
      row.optimal_epochs = result.history.best_epoch + 1;
    } catch (const Error& e) {
      row.error = e.what();
    }
    if (on_row) on_row(row);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::optional<std::size_t> best_sweep_row(const std::vector<SweepRow>& rows) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].ok()) continue;
    if (!best) {
      best = i;
      continue;
    }
    const SweepRow& b = rows[*best];
    if (rows[i].val_accuracy > b.val_accuracy ||
        (rows[i].val_accuracy == b.val_accuracy && rows[i].val_loss < b.val_loss)) {
      best = i;
    }
  }
  return best;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "epsilon,val_loss,val_accuracy,optimal_epochs\n";
  for (const auto& r : rows) {
    if (r.ok()) {
      out << format_real(r.epsilon) << ',' << format_real(r.val_loss) << ',' << format_real(r.val_accuracy) << ','
          << r.optimal_epochs << '\n';
    } else {
      out << format_real(r.epsilon) << ",nan,nan,0\n";
    }
  }
  return out.str();
}

json to_json(const std::vector<SweepRow>& rows) {
  json arr = json::array();
  for (const auto& r : rows) {
    json j = {{"epsilon", r.epsilon}, {"optimal_epochs", r.optimal_epochs}};
    if (r.ok()) {
      j["val_loss"] = r.val_loss;
      j["val_accuracy"] = r.val_accuracy;
    } else {
      j["error"] = r.error;
    }
    arr.push_back(std::move(j));
  }
  json out = {{"rows", std::move(arr)}};
  if (auto best = best_sweep_row(rows)) out["best_index"] = *best;
  return out;
}

std::vector<TrainingConfig> HyperparameterGrid::expand(const TrainingConfig& base) const {
  std::vector<TrainingConfig> configs;
  for (double lr : learning_rates) {
    for (std::size_t bs : batch_sizes) {
      TrainingConfig cfg = base;
      cfg.learning_rate = lr;
      cfg.batch_size = bs;
      configs.push_back(cfg);
    }
  }
  return configs;
}

std::optional<std::size_t> best_leaderboard_row(const std::vector<LeaderboardRow>& rows) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].ok()) continue;
    if (!best) {
      best = i;
      continue;
    }
    const LeaderboardRow& b = rows[*best];
    const LeaderboardRow& r = rows[i];
    if (r.best_val_accuracy > b.best_val_accuracy ||
        (r.best_val_accuracy == b.best_val_accuracy &&
         (r.learning_rate < b.learning_rate ||
          (r.learning_rate == b.learning_rate && r.batch_size < b.batch_size)))) {
      best = i;
    }
  }
  return best;
}

HyperparameterSearchResult hyperparameter_sweep(const ClassifierFactory& factory, const TrainingData& data,
                                                const TrainingConfig& base, const HyperparameterGrid& grid,
                                                const std::function<void(const LeaderboardRow&)>& on_row) {
  const auto configs = grid.expand(base);
  if (configs.empty()) throw InvalidArgument("hyperparameter grid is empty");
  HyperparameterSearchResult result;
  for (const auto& cfg : configs) {
    LeaderboardRow row;
    row.learning_rate = cfg.learning_rate;
    row.batch_size = cfg.batch_size;
    try {
      FitResult fitted = fit(factory(), data, cfg);
      const EpochRecord& best = fitted.history.best();
      row.best_val_accuracy = best.val_acc;
      row.best_val_loss = best.val_loss;
      row.best_epoch = fitted.history.best_epoch;
    } catch (const Error& e) {
      row.error = e.what();
    }
    if (on_row) on_row(row);
    result.leaderboard.push_back(std::move(row));
  }
  auto winner = best_leaderboard_row(result.leaderboard);
  if (!winner) throw SweepFailed("every hyperparameter configuration failed", result.leaderboard);
  result.best = base;
  result.best.learning_rate = result.leaderboard[*winner].learning_rate;
  result.best.batch_size = result.leaderboard[*winner].batch_size;
  return result;
}

std::string leaderboard_csv(const std::vector<LeaderboardRow>& rows) {
  std::ostringstream out;
  out << "learning_rate,batch_size,best_val_accuracy,best_val_loss,best_epoch,error\n";
  for (const auto& r : rows) {
    out << format_real(r.learning_rate) << ',' << r.batch_size << ',' << format_real(r.best_val_accuracy) << ','
        << format_real(r.best_val_loss) << ',' << r.best_epoch << ",\"";
    for (char c : r.error) out << (c == '"' ? "\"\"" : std::string(1, c));
    out << "\"\n";
  }
  return out.str();
}

json to_json(const std::vector<LeaderboardRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    json row = {{"learning_rate", r.learning_rate},
                {"batch_size", r.batch_size},
                {"best_val_accuracy", r.best_val_accuracy},
                {"best_val_loss", r.best_val_loss},
                {"best_epoch", r.best_epoch}};
    row["error"] = r.ok() ? json(nullptr) : json(r.error);
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace nailguard
