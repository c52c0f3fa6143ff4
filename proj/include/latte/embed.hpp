#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "latte/data.hpp"
#include "latte/tensor.hpp"

namespace latte {

/// Text encoder contract: deterministic per-token vectors of width dim().
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual std::vector<Vector> embed_tokens(std::string_view text) const = 0;
  virtual std::string provider_id() const = 0;
  virtual int dim() const = 0;

  /// Mean of embed_tokens(text).
  virtual Vector embed_mean(std::string_view text) const;
};

/// Whitespace tokenizer mapping each token to a seeded unit vector. Stands in
/// for a pretrained text encoder in tests and desk-scale runs.
std::vector<Vector> stub_embed_tokens(std::string_view text, int dim, std::uint64_t seed);

class StubEmbeddingProvider final : public EmbeddingProvider {
 public:
  StubEmbeddingProvider(int dim, std::uint64_t seed);

  std::vector<Vector> embed_tokens(std::string_view text) const override;
  std::string provider_id() const override;
  int dim() const override { return dim_; }

 private:
  int dim_;
  std::uint64_t seed_;
};

/// Thread-safe store of mean text embeddings keyed by hash(provider_id, text),
/// optionally backed by an append-only JSON-lines file of {key, dim, vector}.
class EmbeddingCache {
 public:
  EmbeddingCache() = default;
  explicit EmbeddingCache(std::filesystem::path file);

  static std::string key(std::string_view provider_id, std::string_view text);

  std::optional<Vector> find(const std::string& key) const;
  void insert(const std::string& key, const Vector& vector);
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::unordered_map<std::string, Vector> entries_;
  std::filesystem::path file_;
};

/// Wraps a provider with an EmbeddingCache. With no inner provider the cache
/// is read-only and a miss is a DataError; this is how embeddings produced
/// by an external text encoder are supplied.
class CachedEmbeddingProvider final : public EmbeddingProvider {
 public:
  CachedEmbeddingProvider(std::shared_ptr<const EmbeddingProvider> inner, std::shared_ptr<EmbeddingCache> cache);
  CachedEmbeddingProvider(std::string provider_id, int dim, std::shared_ptr<EmbeddingCache> cache);

  std::vector<Vector> embed_tokens(std::string_view text) const override;
  Vector embed_mean(std::string_view text) const override;
  std::string provider_id() const override { return id_; }
  int dim() const override { return dim_; }

 private:
  std::shared_ptr<const EmbeddingProvider> inner_;
  std::shared_ptr<EmbeddingCache> cache_;
  std::string id_;
  int dim_;
};

/// Serializable description of how to rebuild a provider.
struct EmbeddingSpec {
  std::string provider = "stub";  // "stub" or "cache"
  int dim = 64;
  std::uint64_t seed = 0;
  std::string provider_id;  // required for "cache"
  std::filesystem::path cache_path;

  std::shared_ptr<const EmbeddingProvider> build() const;
};

void to_json(nlohmann::json& j, const EmbeddingSpec& s);
void from_json(const nlohmann::json& j, EmbeddingSpec& s);

/// Text fed to the encoder for a categorical cell.
std::string categorical_text(std::string_view name, std::string_view value);

/// Name-aware embedding of one cell: mean token embedding of "<name>: <value>"
/// for categorical features; mean embedding of "<name>" scaled by the
/// normalized value for numerical features.
Vector embed_feature_value(const EmbeddingProvider& provider, const FeatureDescriptor& feature,
                           const FeatureValue& value, const NormStats& norm_stats);

/// Embeds whole rows, memoizing the per-feature name vectors.
class FeatureEmbedder {
 public:
  FeatureEmbedder(std::shared_ptr<const EmbeddingProvider> provider, Metadata metadata, NormStats norm_stats);

  int dim() const { return provider_->dim(); }
  std::size_t num_features() const { return metadata_.features.size(); }
  /// (rows * features) x dim, row-major by sample then feature.
  Matrix embed_rows(std::span<const Sample> rows) const;

 private:
  std::shared_ptr<const EmbeddingProvider> provider_;
  Metadata metadata_;
  NormStats norm_stats_;
  std::vector<Vector> name_vectors_;
};

struct LlmCallSummary {
  long preprocessing = 0;
  long training = 0;
  long inference = 0;
  long total() const { return preprocessing + training + inference; }
  bool operator==(const LlmCallSummary&) const = default;
};

void to_json(nlohmann::json& j, const LlmCallSummary& s);
void from_json(const nlohmann::json& j, LlmCallSummary& s);

/// Counts LLM invocations per pipeline stage.
class LlmCallCounter {
 public:
  void add_preprocessing(long n = 1) { preprocessing_ += n; }
  void add_training(long n = 1) { training_ += n; }
  void add_inference(long n = 1) { inference_ += n; }
  LlmCallSummary snapshot() const { return {preprocessing_.load(), training_.load(), inference_.load()}; }

 private:
  std::atomic<long> preprocessing_{0};
  std::atomic<long> training_{0};
  std::atomic<long> inference_{0};
};

}  // namespace latte
