#pragma once

#include <cstdint>
#include <vector>

#include "nailguard/evaluation.hpp"
#include "nailguard/training.hpp"

namespace nailguard {

/// Two panels (accuracy, loss), train and validation per epoch. PNG bytes.
std::vector<std::uint8_t> plot_training_curves(const TrainingHistory& history);

/// Count heatmap with per-cell labels. PNG bytes.
std::vector<std::uint8_t> plot_confusion_matrix(const EvaluationReport& report);

}  // namespace nailguard
