#include "latte/nn/layers.hpp"

#include "latte/error.hpp"

namespace latte::nn {

Var ForwardContext::drop(Var x) const {
  if (!training || dropout <= 0.0) return x;
  if (rng == nullptr) throw ContractViolation("training forward pass needs a dropout rng");
  return nn::dropout(x, dropout, *rng);
}

Linear::Linear(ParameterStore& store, const std::string& prefix, Index in, Index out, Rng& rng,
               InitScheme weight_init, InitScheme bias_init)
    : weight_(&store.add(prefix + ".weight", in, out, weight_init, rng)),
      bias_(&store.add(prefix + ".bias", 1, out, bias_init, rng)) {}

Var Linear::operator()(Var x) const {
  auto& t = x.tape();
  return add_row(matmul(x, t.parameter(*weight_)), t.parameter(*bias_));
}

LayerNorm::LayerNorm(ParameterStore& store, const std::string& prefix, Index dim, Rng& rng)
    : gain_(&store.add(prefix + ".gain", 1, dim, InitScheme::ones, rng)),
      bias_(&store.add(prefix + ".bias", 1, dim, InitScheme::zeros, rng)) {}

Var LayerNorm::operator()(Var x) const {
  auto& t = x.tape();
  return layer_norm(x, t.parameter(*gain_), t.parameter(*bias_));
}

FeedForward::FeedForward(ParameterStore& store, const std::string& prefix, Index dim, Index hidden, Rng& rng)
    : in_(store, prefix + ".in", dim, hidden, rng), out_(store, prefix + ".out", hidden, dim, rng, InitScheme::xavier) {}

Var FeedForward::operator()(Var x) const { return out_(gelu(in_(x))); }

MultiHeadAttention::MultiHeadAttention(ParameterStore& store, const std::string& prefix, Index dim, int heads, Rng& rng)
    : q_(store, prefix + ".query", dim, dim, rng, InitScheme::xavier),
      k_(store, prefix + ".key", dim, dim, rng, InitScheme::xavier),
      v_(store, prefix + ".value", dim, dim, rng, InitScheme::xavier),
      o_(store, prefix + ".output", dim, dim, rng, InitScheme::xavier),
      heads_(heads) {
  if (heads < 1 || dim % heads != 0)
    throw ConfigError("model dim " + std::to_string(dim) + " is not divisible by " + std::to_string(heads) + " heads");
}

AttentionResult MultiHeadAttention::operator()(Var queries, Var context,
                                               const std::vector<AttentionSegment>& segments) const {
  auto r = attention(q_(queries), k_(context), v_(context), segments, heads_);
  r.output = o_(r.output);
  return r;
}

TransformerBlock::TransformerBlock(ParameterStore& store, const std::string& prefix, Index dim, Index ffn_dim,
                                   int heads, Rng& rng)
    : ln_attn_(store, prefix + ".ln_attn", dim, rng),
      ln_ffn_(store, prefix + ".ln_ffn", dim, rng),
      attn_(store, prefix + ".attn", dim, heads, rng),
      ffn_(store, prefix + ".ffn", dim, ffn_dim, rng) {}

Var TransformerBlock::operator()(Var tokens, const std::vector<AttentionSegment>& segments,
                                 const ForwardContext& ctx) const {
  Var h = ln_attn_(tokens);
  Var x = add(tokens, ctx.drop(attn_(h, h, segments).output));
  return add(x, ctx.drop(ffn_(ln_ffn_(x))));
}

CrossAttentionBlock::CrossAttentionBlock(ParameterStore& store, const std::string& prefix, Index dim, Index ffn_dim,
                                         int heads, Rng& rng)
    : ln_query_(store, prefix + ".ln_query", dim, rng),
      ln_context_(store, prefix + ".ln_context", dim, rng),
      ln_ffn_(store, prefix + ".ln_ffn", dim, rng),
      attn_(store, prefix + ".attn", dim, heads, rng),
      ffn_(store, prefix + ".ffn", dim, ffn_dim, rng) {}

Var CrossAttentionBlock::operator()(Var queries, Var context, const std::vector<AttentionSegment>& segments,
                                    const ForwardContext& ctx) const {
  Var x = add(queries, ctx.drop(attn_(ln_query_(queries), ln_context_(context), segments).output));
  return add(x, ctx.drop(ffn_(ln_ffn_(x))));
}

MlpHead::MlpHead(ParameterStore& store, const std::string& prefix, Index in, Index hidden, Index out, Rng& rng)
    : in_(store, prefix + ".hidden", in, hidden, rng), out_(store, prefix + ".output", hidden, out, rng, InitScheme::zeros) {}

Var MlpHead::operator()(Var x) const { return out_(gelu(in_(x))); }

ScaledAttention scaled_attention(const Matrix& queries, const Matrix& keys, const Matrix& values) {
  Tape tape;
  auto r = attention(tape.constant(queries), tape.constant(keys), tape.constant(values),
                     {{0, queries.rows(), 0, keys.rows()}}, 1);
  return {r.output.value(), r.weights->front()};
}

Matrix softmax(const Matrix& logits) {
  Tape tape;
  return softmax_rows(tape.constant(logits)).value();
}

double kl_divergence(const Vector& p_logits, const Vector& q_logits, double tau) {
  if (p_logits.size() != q_logits.size()) throw ShapeError("kl_divergence: logit lengths differ");
  Tape tape;
  return kl_rows(tape.constant(p_logits.transpose()), tape.constant(q_logits.transpose()), tau).value()(0, 0);
}

}  // namespace latte::nn
