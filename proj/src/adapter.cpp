#include "latte/adapter.hpp"

#include "latte/error.hpp"

namespace latte {

void AdapterConfig::validate(Index model_dim) const {
  if (layers < 0 || heads < 1 || ffn_dim < 1) throw ConfigError("adapter dimensions must be positive");
  if (model_dim % heads != 0)
    throw ConfigError("adapter model_dim " + std::to_string(model_dim) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  if (!(tau > 0.0)) throw ConfigError("adapter temperature must be positive");
  if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("adapter gate eta must lie in [0, 1]");
}

void to_json(nlohmann::json& j, const AdapterConfig& c) {
  j = {{"layers", c.layers}, {"heads", c.heads}, {"tau", c.tau}, {"eta", c.eta}, {"ffn_dim", c.ffn_dim}};
}

void from_json(const nlohmann::json& j, AdapterConfig& c) {
  c = AdapterConfig{};
  c.layers = j.value("layers", c.layers);
  c.heads = j.value("heads", c.heads);
  c.tau = j.value("tau", c.tau);
  c.eta = j.value("eta", c.eta);
  c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
}

KnowledgeAdapter::KnowledgeAdapter(nn::ParameterStore& store, const AdapterConfig& config, Index model_dim,
                                   Index knowledge_dim, Rng& rng)
    : config_(config), model_dim_(model_dim) {
  config_.validate(model_dim);
  if (knowledge_dim < 1) throw ConfigError("knowledge dimension must be positive");
  for (int l = 0; l < config_.layers; ++l)
    blocks_.emplace_back(store, "adapter.query.blocks." + std::to_string(l), model_dim, config_.ffn_dim,
                         config_.heads, rng);
  w0_ = &store.add("adapter.w0", knowledge_dim, model_dim, nn::InitScheme::kaiming, rng);
  bypass_ = &store.add("adapter.g.bypass", model_dim, model_dim, nn::InitScheme::identity, rng);
  g_hidden_ = nn::Linear(store, "adapter.g.hidden", model_dim, model_dim, rng, nn::InitScheme::kaiming);
  g_output_ = nn::Linear(store, "adapter.g.output", model_dim, model_dim, rng, nn::InitScheme::zeros);
}

nn::Var KnowledgeAdapter::global_query(nn::Var cls, nn::Var features, Index rows, Index n,
                                       const nn::ForwardContext& ctx) const {
  if (n < 1) throw ContractViolation("the global query needs at least one feature to attend to");
  if (cls.rows() != rows || features.rows() != rows * n) throw ShapeError("adapter inputs do not match the row count");
  std::vector<nn::AttentionSegment> segments;
  segments.reserve(static_cast<std::size_t>(rows));
  for (Index r = 0; r < rows; ++r) segments.push_back({r, 1, r * n, n});
  nn::Var q = cls;
  for (const auto& block : blocks_) q = block(q, features, segments, ctx);
  return q;
}

nn::Var KnowledgeAdapter::project_knowledge(nn::Tape& tape, const Vector& h_M) const {
  if (h_M.size() != knowledge_dim())
    throw ShapeError("knowledge vector has dim " + std::to_string(h_M.size()) + ", adapter expects " +
                     std::to_string(knowledge_dim()));
  return nn::matmul(tape.constant(h_M.transpose()), tape.parameter(*w0_));
}

nn::Var KnowledgeAdapter::transform(nn::Var h_llm) const {
  nn::Var linear = nn::matmul(h_llm, h_llm.tape().parameter(*bypass_));
  return nn::add(linear, g_output_(nn::gelu(g_hidden_(h_llm))));
}

nn::Var gate(nn::Var g_out, nn::Var cls, double eta) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("gate eta must lie in [0, 1]");
  if (eta == 0.0) return cls;
  if (eta == 1.0) return g_out;
  return nn::add(nn::scale(g_out, eta), nn::scale(cls, 1.0 - eta));
}

AdapterBatch KnowledgeAdapter::forward(nn::Var cls, nn::Var features, Index rows, Index n, const Vector& h_M,
                                       const nn::ForwardContext& ctx) const {
  AdapterBatch out;
  out.q = global_query(cls, features, rows, n, ctx);
  nn::Var teacher = project_knowledge(cls.tape(), h_M);
  out.q_llm = nn::gather_rows(teacher, std::vector<Index>(static_cast<std::size_t>(rows), 0));
  out.kl = nn::kl_rows(out.q_llm, out.q, config_.tau);

  std::vector<Index> order;
  order.reserve(static_cast<std::size_t>(rows * (n + 1)));
  for (Index r = 0; r < rows; ++r) {
    order.push_back(r);
    for (Index j = 0; j < n; ++j) order.push_back(rows + r * n + j);
  }
  nn::Var tokens = nn::gather_rows(nn::concat_rows({cls, features}), std::move(order));
  std::vector<nn::AttentionSegment> segments;
  segments.reserve(static_cast<std::size_t>(rows));
  for (Index r = 0; r < rows; ++r) segments.push_back({r, 1, r * (n + 1), n + 1});
  auto fused = nn::attention(out.q_llm, tokens, tokens, segments, 1);
  out.h_llm = fused.output;
  out.attention = fused.weights;
  out.h_llm_hat = gate(transform(out.h_llm), cls, config_.eta);
  return out;
}

AdapterBatch KnowledgeAdapter::forward(const EncodedBatch& encoded, const Vector& h_M,
                                       const nn::ForwardContext& ctx) const {
  return forward(encoded.cls(), encoded.feature_tokens(), encoded.rows, encoded.features, h_M, ctx);
}

namespace {

struct RowVars {
  nn::Var cls;
  nn::Var features;
  Index n = 0;
};

RowVars row_constants(nn::Tape& tape, const EncodedRow& encoded) {
  const auto n = static_cast<Index>(encoded.h_features.size());
  Matrix feats(n, encoded.h_cls.size());
  for (Index j = 0; j < n; ++j) {
    if (encoded.h_features[static_cast<std::size_t>(j)].size() != encoded.h_cls.size())
      throw ShapeError("encoded feature width differs from the CLS width");
    feats.row(j) = encoded.h_features[static_cast<std::size_t>(j)].transpose();
  }
  return {tape.constant(encoded.h_cls.transpose()), tape.constant(std::move(feats)), n};
}

}  // namespace

Vector global_query(const KnowledgeAdapter& adapter, const EncodedRow& encoded) {
  nn::Tape tape;
  auto in = row_constants(tape, encoded);
  return adapter.global_query(in.cls, in.features, 1, in.n, {}).value().row(0).transpose();
}

double distill_loss(const KnowledgeAdapter& adapter, const Vector& h_M, const Vector& q, double tau) {
  if (!(tau > 0.0)) throw DomainError("temperature must be positive");
  nn::Tape tape;
  nn::Var teacher = adapter.project_knowledge(tape, h_M);
  if (q.size() != teacher.cols()) throw ShapeError("query width differs from the projected knowledge width");
  return nn::kl_rows(teacher, tape.constant(q.transpose()), tau).value()(0, 0);
}

Fusion knowledge_fusion(const EncodedRow& encoded, const Vector& q_llm) {
  const auto n = static_cast<Index>(encoded.h_features.size());
  if (q_llm.size() != encoded.h_cls.size()) throw ShapeError("q_llm width differs from the model width");
  Matrix tokens(n + 1, encoded.h_cls.size());
  tokens.row(0) = encoded.h_cls.transpose();
  for (Index j = 0; j < n; ++j) tokens.row(j + 1) = encoded.h_features[static_cast<std::size_t>(j)].transpose();
  auto att = nn::scaled_attention(q_llm.transpose(), tokens, tokens);
  return {att.outputs.row(0).transpose(), att.weights.row(0).transpose()};
}

Vector gated_combine(const KnowledgeAdapter& adapter, const Vector& h_llm, const Vector& h_cls, double eta) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("gate eta must lie in [0, 1]");
  if (h_llm.size() != h_cls.size()) throw ShapeError("gate inputs differ in width");
  nn::Tape tape;
  nn::Var g = adapter.transform(tape.constant(h_llm.transpose()));
  return gate(g, tape.constant(h_cls.transpose()), eta).value().row(0).transpose();
}

AdapterOutput adapter_forward(const KnowledgeAdapter& adapter, const EncodedRow& encoded, const Vector& h_M) {
  nn::Tape tape;
  auto in = row_constants(tape, encoded);
  auto batch = adapter.forward(in.cls, in.features, 1, in.n, h_M, {});
  AdapterOutput out;
  out.q = batch.q.value().row(0).transpose();
  out.q_llm = batch.q_llm.value().row(0).transpose();
  out.attention = batch.attention->front().row(0).transpose();
  out.h_llm = batch.h_llm.value().row(0).transpose();
  out.h_llm_hat = batch.h_llm_hat.value().row(0).transpose();
  out.kl_loss = batch.kl.value()(0, 0);
  return out;
}

}  // namespace latte
