#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "latte/model.hpp"

namespace latte {

struct FinetuneConfig {
  double learning_rate = 1e-5;
  int epochs = 200;
  double kl_weight = 1.0;
  int patience = 20;
  double min_delta = 1e-5;
  double prob_floor = 1e-12;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const FinetuneConfig& c);
void from_json(const nlohmann::json& j, FinetuneConfig& c);

/// -log max(p[label], 1e-12) for classification, (label - prediction)^2 for regression.
double supervised_loss(const Vector& prediction, double label, TaskType type);

struct FinetuneResult {
  std::vector<double> losses;
  int epochs_run = 0;
  bool early_stopped = false;
};

/// Full-batch Stage II on the labeled rows. `targets` are class indices for
/// classification and normalized targets for regression. The task head must
/// already be attached.
FinetuneResult finetune(LatteModel& model, const FeatureBatch& labeled, const std::vector<double>& targets,
                        TaskType type, const Vector& h_M, const FinetuneConfig& config);

struct Predictions {
  TaskType type = TaskType::classification;
  /// rows x C class probabilities (classification only).
  Matrix probabilities;
  /// Predictions in normalized target space (regression only).
  Vector normalized;
  /// Predictions on the original target scale (regression only).
  Vector values;

  Index size() const { return type == TaskType::classification ? probabilities.rows() : normalized.size(); }
};

Predictions predict(const LatteModel& model, const FeatureBatch& rows, const Vector& h_M, TaskType type,
                    const NormStats& norm_stats);

/// Class count for classification, 1 for regression.
Index head_width(const Metadata& metadata);
std::vector<double> training_targets(const Metadata& metadata, const NormStats& norm_stats,
                                     std::span<const Sample> rows);

/// Warm-starts from `start` (pretrain or init stage), drops any pseudo head,
/// fine-tunes on the few-shot rows and returns a stage="finetune" checkpoint.
nn::Checkpoint finetune_checkpoint(const nn::Checkpoint& start, const TabularDataset& dataset,
                                   const FewShotSplit& split, const FinetuneConfig& config,
                                   FinetuneResult* result = nullptr);

/// Inference from a fine-tuned checkpoint; never contacts a language model.
Predictions predict(const nn::Checkpoint& checkpoint, std::span<const Sample> rows);

}  // namespace latte
