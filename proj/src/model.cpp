#include "latte/model.hpp"

#include "latte/error.hpp"

namespace latte {

void ModelConfig::validate() const {
  encoder.validate();
  adapter.validate(encoder.model_dim);
  if (input_dim < 1) throw ConfigError("model input_dim must be positive");
  if (knowledge_dim < 1) throw ConfigError("model knowledge_dim must be positive");
  if (head_hidden < 1) throw ConfigError("model head_hidden must be positive");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"encoder", c.encoder},
       {"adapter", c.adapter},
       {"input_dim", c.input_dim},
       {"knowledge_dim", c.knowledge_dim},
       {"head_hidden", c.head_hidden}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  c = ModelConfig{};
  if (j.contains("encoder")) c.encoder = j["encoder"].get<EncoderConfig>();
  if (j.contains("adapter")) c.adapter = j["adapter"].get<AdapterConfig>();
  c.input_dim = j.value("input_dim", c.input_dim);
  c.knowledge_dim = j.value("knowledge_dim", c.knowledge_dim);
  c.head_hidden = j.value("head_hidden", c.head_hidden);
}

void TaskContext::write(nn::Checkpoint& checkpoint) const {
  auto& m = checkpoint.manifest;
  m["metadata"] = metadata;
  m["norm_stats"] = norm_stats;
  m["embedding"] = embedding;
  if (vocabulary)
    m["vocabulary"] = vocabulary->values();
  else
    m.erase("vocabulary");
  nlohmann::json k = knowledge;
  k.erase("vector");
  m["knowledge"] = k;
  checkpoint.put("knowledge.h_M", Matrix(knowledge.vector.transpose()));
}

TaskContext TaskContext::read(const nn::Checkpoint& checkpoint) {
  const auto& m = checkpoint.manifest;
  TaskContext ctx;
  try {
    ctx.metadata = m.at("metadata").get<Metadata>();
    ctx.norm_stats = m.at("norm_stats").get<NormStats>();
    ctx.embedding = m.at("embedding").get<EmbeddingSpec>();
    if (m.contains("vocabulary"))
      ctx.vocabulary = ValueVocabulary::from_values(m["vocabulary"].get<std::vector<std::string>>());
    nlohmann::json k = m.at("knowledge");
    const Matrix& h = checkpoint.at("knowledge.h_M");
    k["vector"] = std::vector<double>(h.data(), h.data() + h.size());
    ctx.knowledge = k.get<KnowledgeVector>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint task context: ") + e.what());
  }
  return ctx;
}

Featurizer::Featurizer(const TaskContext& context) : context_(&context) {
  if (!context.vocabulary)
    embedder_ = std::make_shared<FeatureEmbedder>(context.embedding.build(), context.metadata, context.norm_stats);
}

FeatureBatch Featurizer::operator()(std::span<const Sample> rows) const {
  FeatureBatch batch;
  batch.rows = static_cast<Index>(rows.size());
  batch.features = static_cast<Index>(context_->metadata.features.size());
  batch.inputs = embedder_ ? embedder_->embed_rows(rows)
                           : context_->vocabulary->design_rows(context_->metadata, context_->norm_stats, rows);
  return batch;
}

Index Featurizer::input_dim() const { return embedder_ ? embedder_->dim() : context_->vocabulary->size(); }

LatteModel::LatteModel(const ModelConfig& config, std::uint64_t seed)
    : config_(config), seed_(seed), store_(std::make_unique<nn::ParameterStore>()) {
  config_.validate();
  Rng rng(stream_seed(seed, "init"));
  encoder_ = std::make_unique<TabularEncoder>(*store_, config_.encoder, config_.input_dim, rng);
  adapter_ = std::make_unique<KnowledgeAdapter>(*store_, config_.adapter, config_.encoder.model_dim,
                                                config_.knowledge_dim, rng);
}

void LatteModel::attach_head(const std::string& name, Index outputs) {
  if (outputs < 1) throw ConfigError("head '" + name + "' needs at least one output");
  if (has_head(name)) throw ConfigError("head '" + name + "' is already attached");
  Rng rng(stream_seed(seed_, "head:" + name));
  head_layers_.emplace(name, std::make_unique<nn::MlpHead>(*store_, name, config_.encoder.model_dim,
                                                           config_.head_hidden, outputs, rng));
  head_widths_.emplace(name, outputs);
}

bool LatteModel::has_head(std::string_view name) const { return head_layers_.find(name) != head_layers_.end(); }

LatteModel::Pass LatteModel::forward(nn::Tape& tape, const FeatureBatch& batch, const Vector& h_M,
                                     const nn::ForwardContext& ctx, std::string_view head,
                                     const Matrix* cls_mask) const {
  auto it = head_layers_.find(head);
  if (it == head_layers_.end()) throw ContractViolation("model has no head named '" + std::string(head) + "'");
  Pass pass;
  pass.encoded = encoder_->forward(tape, batch, ctx);
  nn::Var cls = pass.encoded.cls();
  if (cls_mask != nullptr) {
    if (cls_mask->rows() != cls.rows() || cls_mask->cols() != cls.cols())
      throw ShapeError("corruption mask does not match the CLS batch");
    cls = nn::mul(cls, tape.constant(*cls_mask));
  }
  pass.adapter = adapter_->forward(cls, pass.encoded.feature_tokens(), batch.rows, batch.features, h_M, ctx);
  pass.output = (*it->second)(ctx.drop(pass.adapter.h_llm_hat));
  return pass;
}

void LatteModel::store(nn::Checkpoint& checkpoint) const {
  checkpoint.manifest["model"] = config_;
  checkpoint.manifest["seed"] = seed_;
  nlohmann::json heads = nlohmann::json::object();
  for (const auto& [name, width] : head_widths_) heads[name] = width;
  checkpoint.manifest["heads"] = heads;
  nn::store_parameters(checkpoint, *store_);
}

LatteModel LatteModel::restore(const nn::Checkpoint& checkpoint, bool with_heads) {
  const auto& m = checkpoint.manifest;
  if (!m.contains("model")) throw FormatError("checkpoint manifest lacks a model configuration");
  LatteModel model(m["model"].get<ModelConfig>(), m.value("seed", std::uint64_t{0}));
  if (with_heads && m.contains("heads"))
    for (const auto& [name, width] : m["heads"].items()) model.attach_head(name, width.get<Index>());
  nn::restore_parameters(checkpoint, *model.store_, "sate.");
  nn::restore_parameters(checkpoint, *model.store_, "adapter.");
  for (const auto& [name, layer] : model.head_layers_) nn::restore_parameters(checkpoint, *model.store_, name + ".");
  return model;
}

}  // namespace latte
