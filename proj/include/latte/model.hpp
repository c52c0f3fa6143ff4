#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>

#include <json.hpp>

#include "latte/adapter.hpp"
#include "latte/data.hpp"
#include "latte/embed.hpp"
#include "latte/encoder.hpp"
#include "latte/knowledge.hpp"
#include "latte/nn/checkpoint.hpp"

namespace latte {

inline constexpr std::string_view kTrueHead = "head";
inline constexpr std::string_view kPseudoHead = "pseudo_head";

struct ModelConfig {
  EncoderConfig encoder;
  AdapterConfig adapter;
  Index input_dim = 64;
  Index knowledge_dim = 0;
  Index head_hidden = 256;

  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Everything besides weights that turns raw rows into model inputs.
struct TaskContext {
  Metadata metadata;
  NormStats norm_stats;
  EmbeddingSpec embedding;
  /// Present only for the value-only ablation encoder.
  std::optional<ValueVocabulary> vocabulary;
  KnowledgeVector knowledge;

  void write(nn::Checkpoint& checkpoint) const;
  static TaskContext read(const nn::Checkpoint& checkpoint);
};

class Featurizer {
 public:
  explicit Featurizer(const TaskContext& context);

  FeatureBatch operator()(std::span<const Sample> rows) const;
  Index input_dim() const;

 private:
  const TaskContext* context_;
  std::shared_ptr<const FeatureEmbedder> embedder_;
};

class LatteModel {
 public:
  LatteModel(const ModelConfig& config, std::uint64_t seed);
  LatteModel(LatteModel&&) noexcept = default;
  LatteModel& operator=(LatteModel&&) noexcept = default;

  const ModelConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  nn::ParameterStore& parameters() { return *store_; }
  const nn::ParameterStore& parameters() const { return *store_; }
  const TabularEncoder& encoder() const { return *encoder_; }
  const KnowledgeAdapter& adapter() const { return *adapter_; }

  /// Adds an MLP head "<name>." of width `outputs` over the gated representation.
  void attach_head(const std::string& name, Index outputs);
  bool has_head(std::string_view name) const;
  const std::map<std::string, Index, std::less<>>& heads() const { return head_widths_; }

  struct Pass {
    EncodedBatch encoded;
    AdapterBatch adapter;
    nn::Var output;
  };
  /// `cls_mask` (rows x D, entries 0/1) corrupts the CLS representation
  /// before it enters the adapter.
  Pass forward(nn::Tape& tape, const FeatureBatch& batch, const Vector& h_M, const nn::ForwardContext& ctx,
               std::string_view head, const Matrix* cls_mask = nullptr) const;

  /// Writes weights plus "model", "heads" and "seed" manifest entries.
  void store(nn::Checkpoint& checkpoint) const;
  /// Rebuilds a model from a checkpoint; heads are restored only when asked.
  static LatteModel restore(const nn::Checkpoint& checkpoint, bool with_heads = true);

 private:
  ModelConfig config_;
  std::uint64_t seed_ = 0;
  std::unique_ptr<nn::ParameterStore> store_;
  std::unique_ptr<TabularEncoder> encoder_;
  std::unique_ptr<KnowledgeAdapter> adapter_;
  std::map<std::string, std::unique_ptr<nn::MlpHead>, std::less<>> head_layers_;
  std::map<std::string, Index, std::less<>> head_widths_;
};

}  // namespace latte
