#pragma once

#include <memory>
#include <vector>

#include <json.hpp>

#include "latte/encoder.hpp"

namespace latte {

struct AdapterConfig {
  int layers = 2;
  int heads = 2;
  double tau = 4.0;
  double eta = 0.5;
  Index ffn_dim = 256;

  void validate(Index model_dim) const;
};

void to_json(nlohmann::json& j, const AdapterConfig& c);
void from_json(const nlohmann::json& j, AdapterConfig& c);

struct AdapterOutput {
  Vector q;
  Vector q_llm;
  Vector attention;
  Vector h_llm;
  Vector h_llm_hat;
  double kl_loss = 0.0;
};

/// Batched adapter result on a tape; each Var has one row per sample.
struct AdapterBatch {
  nn::Var q;
  nn::Var q_llm;
  nn::Var h_llm;
  nn::Var h_llm_hat;
  nn::Var kl;  // rows x 1
  /// Per-row fusion weights over [CLS, features], one 1 x (n+1) matrix per row.
  std::shared_ptr<std::vector<Matrix>> attention;
};

/// Knowledge adapter: global query transformer, W_0 projection of the task
/// knowledge, query-guided fusion and the eta gate. Parameters live under "adapter.".
class KnowledgeAdapter {
 public:
  KnowledgeAdapter(nn::ParameterStore& store, const AdapterConfig& config, Index model_dim, Index knowledge_dim,
                   Rng& rng);

  /// `cls` is rows x D, `features` is (rows * n) x D grouped by row.
  AdapterBatch forward(nn::Var cls, nn::Var features, Index rows, Index n, const Vector& h_M,
                       const nn::ForwardContext& ctx) const;
  AdapterBatch forward(const EncodedBatch& encoded, const Vector& h_M, const nn::ForwardContext& ctx) const;

  nn::Var global_query(nn::Var cls, nn::Var features, Index rows, Index n, const nn::ForwardContext& ctx) const;
  /// 1 x D projection h_M W_0.
  nn::Var project_knowledge(nn::Tape& tape, const Vector& h_M) const;
  /// g(x) = x W_a + GELU(x W_1 + b_1) W_2 + b_2.
  nn::Var transform(nn::Var h_llm) const;

  const AdapterConfig& config() const { return config_; }
  Index model_dim() const { return model_dim_; }
  Index knowledge_dim() const { return w0_->value.rows(); }
  const Matrix& w0() const { return w0_->value; }

 private:
  AdapterConfig config_;
  Index model_dim_ = 0;
  std::vector<nn::CrossAttentionBlock> blocks_;
  nn::Parameter* w0_ = nullptr;
  nn::Parameter* bypass_ = nullptr;
  nn::Linear g_hidden_;
  nn::Linear g_output_;
};

/// Selects between the two gate inputs, with exact pass-through at the ends.
nn::Var gate(nn::Var g_out, nn::Var cls, double eta);

Vector global_query(const KnowledgeAdapter& adapter, const EncodedRow& encoded);
double distill_loss(const KnowledgeAdapter& adapter, const Vector& h_M, const Vector& q, double tau);

struct Fusion {
  Vector h_llm;
  Vector weights;
};
Fusion knowledge_fusion(const EncodedRow& encoded, const Vector& q_llm);

Vector gated_combine(const KnowledgeAdapter& adapter, const Vector& h_llm, const Vector& h_cls, double eta);

AdapterOutput adapter_forward(const KnowledgeAdapter& adapter, const EncodedRow& encoded, const Vector& h_M);

}  // namespace latte
