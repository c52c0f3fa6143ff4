#pragma once

#include <string>
#include <vector>

#include "latte/nn/autograd.hpp"
#include "latte/nn/parameters.hpp"

namespace latte::nn {

/// Training/eval switch threaded through forward passes.
struct ForwardContext {
  bool training = false;
  double dropout = 0.0;
  Rng* rng = nullptr;

  Var drop(Var x) const;
};

class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& prefix, Index in, Index out, Rng& rng,
         InitScheme weight_init = InitScheme::kaiming, InitScheme bias_init = InitScheme::zeros);

  Var operator()(Var x) const;
  Index in_features() const { return weight_->value.rows(); }
  Index out_features() const { return weight_->value.cols(); }
  Parameter& weight() const { return *weight_; }
  Parameter& bias() const { return *bias_; }

 private:
  Parameter* weight_ = nullptr;
  Parameter* bias_ = nullptr;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& prefix, Index dim, Rng& rng);
  Var operator()(Var x) const;

 private:
  Parameter* gain_ = nullptr;
  Parameter* bias_ = nullptr;
};

class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(ParameterStore& store, const std::string& prefix, Index dim, Index hidden, Rng& rng);
  Var operator()(Var x) const;

 private:
  Linear in_;
  Linear out_;
};

/// Multi-head attention with query/key/value/output projections.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore& store, const std::string& prefix, Index dim, int heads, Rng& rng);

  AttentionResult operator()(Var queries, Var context, const std::vector<AttentionSegment>& segments) const;
  int heads() const { return heads_; }

 private:
  Linear q_, k_, v_, o_;
  int heads_ = 1;
};

/// Pre-norm self-attention block; carries no positional signal.
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(ParameterStore& store, const std::string& prefix, Index dim, Index ffn_dim, int heads, Rng& rng);

  Var operator()(Var tokens, const std::vector<AttentionSegment>& segments, const ForwardContext& ctx) const;

 private:
  LayerNorm ln_attn_;
  LayerNorm ln_ffn_;
  MultiHeadAttention attn_;
  FeedForward ffn_;
};

/// Pre-norm cross-attention block: a query stream attends to a context set.
class CrossAttentionBlock {
 public:
  CrossAttentionBlock() = default;
  CrossAttentionBlock(ParameterStore& store, const std::string& prefix, Index dim, Index ffn_dim, int heads, Rng& rng);

  Var operator()(Var queries, Var context, const std::vector<AttentionSegment>& segments,
                 const ForwardContext& ctx) const;

 private:
  LayerNorm ln_query_;
  LayerNorm ln_context_;
  LayerNorm ln_ffn_;
  MultiHeadAttention attn_;
  FeedForward ffn_;
};

/// Two-layer GELU perceptron.
class MlpHead {
 public:
  MlpHead() = default;
  MlpHead(ParameterStore& store, const std::string& prefix, Index in, Index hidden, Index out, Rng& rng);
  Var operator()(Var x) const;
  Index out_features() const { return out_.out_features(); }

 private:
  Linear in_;
  Linear out_;
};

// ---- plain-value helpers ----------------------------------------------------

struct ScaledAttention {
  Matrix outputs;
  Matrix weights;
};

/// softmax(Q K^T / sqrt(d)) V for a single head.
ScaledAttention scaled_attention(const Matrix& queries, const Matrix& keys, const Matrix& values);

/// KL(softmax(p / tau) || softmax(q / tau)).
double kl_divergence(const Vector& p_logits, const Vector& q_logits, double tau);

Matrix softmax(const Matrix& logits);

}  // namespace latte::nn
