#include "latte/encoder.hpp"

#include <set>

#include "latte/error.hpp"

namespace latte {

void EncoderConfig::validate() const {
  if (model_dim < 1 || ffn_dim < 1 || layers < 0 || heads < 1)
    throw ConfigError("encoder dimensions must be positive");
  if (model_dim % heads != 0)
    throw ConfigError("encoder model_dim " + std::to_string(model_dim) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("encoder dropout must lie in [0, 1)");
}

void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = {{"model_dim", c.model_dim}, {"ffn_dim", c.ffn_dim}, {"layers", c.layers},
       {"heads", c.heads},         {"dropout", c.dropout}, {"semantic", c.semantic}};
}

void from_json(const nlohmann::json& j, EncoderConfig& c) {
  c = EncoderConfig{};
  c.model_dim = j.value("model_dim", c.model_dim);
  c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
  c.layers = j.value("layers", c.layers);
  c.heads = j.value("heads", c.heads);
  c.dropout = j.value("dropout", c.dropout);
  c.semantic = j.value("semantic", c.semantic);
  c.validate();
}

FeatureBatch FeatureBatch::select(std::span<const std::size_t> indices) const {
  std::vector<Index> idx(indices.begin(), indices.end());
  return select(std::span<const Index>(idx));
}

FeatureBatch FeatureBatch::select(std::span<const Index> indices) const {
  FeatureBatch out;
  out.rows = static_cast<Index>(indices.size());
  out.features = features;
  out.inputs.resize(out.rows * features, inputs.cols());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const Index src = indices[r];
    if (src < 0 || src >= rows) throw ContractViolation("feature batch index out of range");
    out.inputs.middleRows(static_cast<Index>(r) * features, features) = inputs.middleRows(src * features, features);
  }
  return out;
}

ValueVocabulary ValueVocabulary::from_values(std::vector<std::string> values) {
  ValueVocabulary v;
  v.values_ = std::move(values);
  for (std::size_t i = 0; i < v.values_.size(); ++i) v.index_.emplace(v.values_[i], static_cast<Index>(i) + 2);
  return v;
}

ValueVocabulary ValueVocabulary::build(const TabularDataset& dataset) {
  std::set<std::string> seen;
  for (const auto* split : {&dataset.labeled, &dataset.unlabeled})
    for (const auto& s : *split)
      for (const auto& v : s.values)
        if (const auto* text = std::get_if<std::string>(&v)) seen.insert(*text);
  return from_values(std::vector<std::string>(seen.begin(), seen.end()));
}

Matrix ValueVocabulary::design_rows(const Metadata& metadata, const NormStats& norm_stats,
                                    std::span<const Sample> rows) const {
  const auto n = static_cast<Index>(metadata.features.size());
  Matrix out = Matrix::Zero(static_cast<Index>(rows.size()) * n, size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    expects(static_cast<Index>(rows[r].values.size()) == n, "row does not match the metadata schema");
    for (Index j = 0; j < n; ++j) {
      const auto& f = metadata.features[static_cast<std::size_t>(j)];
      const auto& cell = rows[r].values[static_cast<std::size_t>(j)];
      const Index at = static_cast<Index>(r) * n + j;
      if (f.kind == FeatureKind::numerical) {
        out(at, 0) = norm_stats.normalize_value(f.name, std::get<double>(cell));
      } else {
        auto it = index_.find(std::get<std::string>(cell));
        out(at, it == index_.end() ? 1 : it->second) = 1.0;
      }
    }
  }
  return out;
}

nn::Var EncodedBatch::cls() const {
  std::vector<Index> idx(static_cast<std::size_t>(rows));
  for (Index r = 0; r < rows; ++r) idx[static_cast<std::size_t>(r)] = r * stride();
  return nn::gather_rows(tokens, std::move(idx));
}

nn::Var EncodedBatch::feature_tokens() const {
  std::vector<Index> idx;
  idx.reserve(static_cast<std::size_t>(rows * features));
  for (Index r = 0; r < rows; ++r)
    for (Index j = 0; j < features; ++j) idx.push_back(r * stride() + 1 + j);
  return nn::gather_rows(tokens, std::move(idx));
}

std::vector<EncodedRow> EncodedBatch::to_rows(const std::vector<std::string>& feature_order) const {
  const Matrix& t = tokens.value();
  std::vector<EncodedRow> out(static_cast<std::size_t>(rows));
  for (Index r = 0; r < rows; ++r) {
    auto& row = out[static_cast<std::size_t>(r)];
    row.h_cls = t.row(r * stride()).transpose();
    for (Index j = 0; j < features; ++j) row.h_features.push_back(t.row(r * stride() + 1 + j).transpose());
    row.feature_order = feature_order;
  }
  return out;
}

std::vector<nn::AttentionSegment> row_segments(Index rows, Index tokens_per_row) {
  std::vector<nn::AttentionSegment> segs;
  segs.reserve(static_cast<std::size_t>(rows));
  for (Index r = 0; r < rows; ++r)
    segs.push_back({r * tokens_per_row, tokens_per_row, r * tokens_per_row, tokens_per_row});
  return segs;
}

TabularEncoder::TabularEncoder(nn::ParameterStore& store, const EncoderConfig& config, Index input_dim, Rng& rng)
    : config_(config) {
  config_.validate();
  if (input_dim < 1) throw ConfigError("encoder input dimension must be positive");
  const Index d = config_.model_dim;
  // A random input bias keeps layer norm from collapsing x * e to sign(x) * e.
  input_ = nn::Linear(store, "sate.input", input_dim, d, rng, nn::InitScheme::kaiming, nn::InitScheme::normal);
  cls_ = &store.add("sate.cls", 1, d, nn::InitScheme::normal, rng);
  for (int l = 0; l < config_.layers; ++l)
    blocks_.emplace_back(store, "sate.blocks." + std::to_string(l), d, config_.ffn_dim, config_.heads, rng);
  final_norm_ = nn::LayerNorm(store, "sate.final_norm", d, rng);
}

EncodedBatch TabularEncoder::forward(nn::Tape& tape, const FeatureBatch& batch, const nn::ForwardContext& ctx) const {
  if (batch.features < 1) throw ContractViolation("a row needs at least one feature");
  if (batch.inputs.rows() != batch.rows * batch.features)
    throw ShapeError("feature batch holds " + std::to_string(batch.inputs.rows()) + " tokens, expected " +
                     std::to_string(batch.rows * batch.features));
  if (batch.inputs.cols() != input_dim())
    throw ShapeError("feature width " + std::to_string(batch.inputs.cols()) + " differs from encoder input width " +
                     std::to_string(input_dim()));

  const Index n = batch.features;
  const Index stride = n + 1;
  nn::Var projected = input_(tape.constant(batch.inputs));
  nn::Var stacked = nn::concat_rows({tape.parameter(*cls_), projected});

  std::vector<Index> order;
  order.reserve(static_cast<std::size_t>(batch.rows * stride));
  for (Index r = 0; r < batch.rows; ++r) {
    order.push_back(0);
    for (Index j = 0; j < n; ++j) order.push_back(1 + r * n + j);
  }
  nn::Var tokens = nn::gather_rows(stacked, std::move(order));

  const auto segments = row_segments(batch.rows, stride);
  for (const auto& block : blocks_) tokens = block(tokens, segments, ctx);
  return {final_norm_(tokens), batch.rows, n};
}

EncodedRow encode_row(const TabularEncoder& encoder, const std::vector<std::pair<std::string, Vector>>& features) {
  expects(!features.empty(), "encode_row needs at least one feature");
  FeatureBatch batch;
  batch.rows = 1;
  batch.features = static_cast<Index>(features.size());
  batch.inputs.resize(batch.features, features.front().second.size());
  std::vector<std::string> order;
  for (std::size_t j = 0; j < features.size(); ++j) {
    if (features[j].second.size() != batch.inputs.cols())
      throw ShapeError("feature '" + features[j].first + "' has a different embedding width");
    batch.inputs.row(static_cast<Index>(j)) = features[j].second.transpose();
    order.push_back(features[j].first);
  }
  return encode_batch(encoder, batch, order).front();
}

std::vector<EncodedRow> encode_batch(const TabularEncoder& encoder, const FeatureBatch& batch,
                                     const std::vector<std::string>& feature_order) {
  expects(static_cast<Index>(feature_order.size()) == batch.features, "feature order does not match the batch");
  nn::Tape tape;
  return encoder.forward(tape, batch, {}).to_rows(feature_order);
}

}  // namespace latte
