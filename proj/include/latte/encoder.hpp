#pragma once

#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "latte/data.hpp"
#include "latte/nn/layers.hpp"

namespace latte {

struct EncoderConfig {
  Index model_dim = 128;
  Index ffn_dim = 256;
  int layers = 2;
  int heads = 8;
  double dropout = 0.1;
  /// Name-aware feature embeddings; false selects the semantics-free
  /// value-only tokens used by the SaTE ablation.
  bool semantic = true;

  void validate() const;
};

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);

/// Feature tokens for a batch of rows: `inputs` holds rows * features
/// entries, row-major by sample then feature.
struct FeatureBatch {
  Matrix inputs;
  Index rows = 0;
  Index features = 0;

  FeatureBatch select(std::span<const std::size_t> indices) const;
  FeatureBatch select(std::span<const Index> indices) const;
};

/// Column-blind token vocabulary for the ablation encoder. Slot 0 carries the
/// normalized value of any numerical feature, slot 1 is the unknown value,
/// the rest are one-hot categorical values shared across all columns. No slot
/// depends on a feature's name or position.
class ValueVocabulary {
 public:
  static ValueVocabulary build(const TabularDataset& dataset);

  Index size() const { return static_cast<Index>(values_.size()) + 2; }
  Matrix design_rows(const Metadata& metadata, const NormStats& norm_stats, std::span<const Sample> rows) const;

  const std::vector<std::string>& values() const { return values_; }
  static ValueVocabulary from_values(std::vector<std::string> values);

 private:
  std::vector<std::string> values_;
  std::map<std::string, Index, std::less<>> index_;
};

struct EncodedRow {
  Vector h_cls;
  std::vector<Vector> h_features;
  std::vector<std::string> feature_order;
};

/// Encoder output on a tape: tokens are laid out per row as [CLS, f_1..f_n].
struct EncodedBatch {
  nn::Var tokens;
  Index rows = 0;
  Index features = 0;

  Index stride() const { return features + 1; }
  nn::Var cls() const;
  nn::Var feature_tokens() const;
  std::vector<EncodedRow> to_rows(const std::vector<std::string>& feature_order) const;
};

/// Attention segments letting each row's [CLS, features] attend within the row.
std::vector<nn::AttentionSegment> row_segments(Index rows, Index tokens_per_row);

/// Semantic-aware tabular encoder: input projection, a learned [CLS] vector
/// and a stack of position-free transformer blocks. Parameters live under "sate.".
class TabularEncoder {
 public:
  TabularEncoder(nn::ParameterStore& store, const EncoderConfig& config, Index input_dim, Rng& rng);

  EncodedBatch forward(nn::Tape& tape, const FeatureBatch& batch, const nn::ForwardContext& ctx) const;

  const EncoderConfig& config() const { return config_; }
  Index input_dim() const { return input_.in_features(); }

 private:
  EncoderConfig config_;
  nn::Linear input_;
  nn::Parameter* cls_ = nullptr;
  std::vector<nn::TransformerBlock> blocks_;
  nn::LayerNorm final_norm_;
};

/// Eval-mode encoding of one row given (name, vector) pairs.
EncodedRow encode_row(const TabularEncoder& encoder, const std::vector<std::pair<std::string, Vector>>& features);

/// Eval-mode encoding of a whole batch in one pass.
std::vector<EncodedRow> encode_batch(const TabularEncoder& encoder, const FeatureBatch& batch,
                                     const std::vector<std::string>& feature_order);

}  // namespace latte
