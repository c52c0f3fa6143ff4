#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "latte/data.hpp"
#include "latte/embed.hpp"
#include "latte/finetune.hpp"
#include "latte/knowledge.hpp"
#include "latte/model.hpp"
#include "latte/pretrain.hpp"

namespace latte {

/// Ablation switches. LLM off means eta = 0 and no distillation loss; Meta
/// off skips Stage I; SaTE off swaps name-aware tokens for value-only ones.
struct Variant {
  bool sate = true;
  bool llm = true;
  bool meta = true;

  /// "full", or the disabled parts joined by '+', e.g. "no-llm+no-meta".
  std::string name() const;
  /// Accepts the names produced by name(); parts may be joined by '+' or ','.
  static Variant parse(std::string_view text);
  bool operator==(const Variant&) const = default;
};

struct ModelSettings {
  EncoderConfig encoder;
  AdapterConfig adapter;
  Index head_hidden = 256;
  PretrainConfig pretrain;
  FinetuneConfig finetune;
};

void to_json(nlohmann::json& j, const ModelSettings& s);
void from_json(const nlohmann::json& j, ModelSettings& s);

struct MetricResult {
  std::string dataset;
  std::string variant;
  int shot = 0;
  std::uint64_t seed = 0;
  std::string metric;  // "auc" or "mse"
  double value = 0.0;
  /// Non-empty when the cell failed; value is then NaN.
  std::string error;
};

struct ExperimentReport {
  std::vector<MetricResult> results;
  LlmCallSummary llm_calls;
};

struct ExperimentConfig {
  std::string dataset_name = "dataset";
  EmbeddingSpec embedding;
  ModelSettings settings;
  std::vector<int> shots{4, 8, 16};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<Variant> variants{Variant{}};
  /// Adds a "logreg" (classification) or "ridge" (regression) row.
  bool baseline = false;
  /// When set, every fine-tuned checkpoint and Stage I loss curve is written here.
  std::optional<std::filesystem::path> artifact_dir;
};

/// Builds the per-variant context (embedding spec or value vocabulary).
TaskContext make_task_context(const TabularDataset& dataset, const KnowledgeVector& knowledge,
                              const EmbeddingSpec& embedding, const Variant& variant);

/// Resolved model configuration for a variant (eta, input width).
ModelConfig make_model_config(const ModelSettings& settings, const TaskContext& context, const Variant& variant);

/// Rows Stage I learns from: the unlabeled pool, or the labeled pool with
/// labels ignored when no unlabeled rows exist.
std::vector<Sample> pretraining_rows(const TabularDataset& dataset);

/// Initial (Meta off) or Stage I checkpoint for one seed and variant.
nn::Checkpoint starting_checkpoint(const TabularDataset& dataset, const TaskContext& context,
                                   const ModelSettings& settings, const Variant& variant, std::uint64_t seed,
                                   std::vector<LossRecord>* curve = nullptr);

std::uint64_t few_shot_seed(std::uint64_t seed, int shot);

/// Test-set metric of a fine-tuned checkpoint: AUC or normalized MSE.
MetricResult score_checkpoint(const nn::Checkpoint& checkpoint, const TabularDataset& dataset);

/// Runs every (variant, shot, seed) cell; a failing cell is recorded and the
/// sweep continues. The LLM counter is snapshotted into the report.
ExperimentReport run_experiment(const TabularDataset& dataset, const KnowledgeVector& knowledge,
                                const ExperimentConfig& config, const LlmCallCounter& counter);

}  // namespace latte
