#include "latte/embed.hpp"

#include <fstream>
#include <sstream>

#include "latte/error.hpp"
#include "latte/hash.hpp"
#include "latte/rng.hpp"

namespace latte {

Vector EmbeddingProvider::embed_mean(std::string_view text) const {
  const auto tokens = embed_tokens(text);
  expects(!tokens.empty(), "provider returned no token vectors");
  Vector mean = Vector::Zero(dim());
  for (const auto& t : tokens) {
    if (t.size() != dim()) throw ShapeError("token vector has width " + std::to_string(t.size()));
    mean += t;
  }
  return mean / static_cast<double>(tokens.size());
}

std::vector<Vector> stub_embed_tokens(std::string_view text, int dim, std::uint64_t seed) {
  expects(dim >= 1, "embedding dimension must be positive");
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) tokens.push_back(text.substr(i, j - i));
    i = j;
  }
  if (tokens.empty()) tokens.push_back(std::string_view{});

  std::vector<Vector> out;
  out.reserve(tokens.size());
  for (auto token : tokens) {
    Rng rng(mix_seed({fnv1a64(token), seed}));
    Vector v(dim);
    for (int k = 0; k < dim; ++k) v[k] = rng.normal();
    out.push_back(v / v.norm());
  }
  return out;
}

StubEmbeddingProvider::StubEmbeddingProvider(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  expects(dim >= 1, "embedding dimension must be positive");
}

std::vector<Vector> StubEmbeddingProvider::embed_tokens(std::string_view text) const {
  return stub_embed_tokens(text, dim_, seed_);
}

std::string StubEmbeddingProvider::provider_id() const {
  return "stub/d" + std::to_string(dim_) + "/s" + std::to_string(seed_);
}

EmbeddingCache::EmbeddingCache(std::filesystem::path file) : file_(std::move(file)) {
  std::ifstream in(file_);
  if (!in) return;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto values = j.at("vector").get<std::vector<double>>();
      if (static_cast<int>(values.size()) != j.at("dim").get<int>())
        throw FormatError("embedding cache record " + std::to_string(n) + ": dim mismatch");
      entries_[j.at("key").get<std::string>()] = Eigen::Map<const Vector>(values.data(), values.size());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("embedding cache record " + std::to_string(n) + ": " + e.what());
    }
  }
}

std::string EmbeddingCache::key(std::string_view provider_id, std::string_view text) {
  std::string joined(provider_id);
  joined += '\x1f';
  joined += text;
  return hex64(fnv1a64(joined)) + hex64(fnv1a64(joined, 0x84222325cbf29ce4ULL));
}

std::optional<Vector> EmbeddingCache::find(const std::string& key) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingCache::insert(const std::string& key, const Vector& vector) {
  std::lock_guard lock(mutex_);
  if (!entries_.emplace(key, vector).second) return;
  if (file_.empty()) return;
  std::ofstream out(file_, std::ios::app);
  if (!out) throw IoError("cannot append to embedding cache " + file_.string());
  nlohmann::json j = {{"key", key},
                      {"dim", vector.size()},
                      {"vector", std::vector<double>(vector.data(), vector.data() + vector.size())}};
  out << j.dump() << '\n';
}

std::size_t EmbeddingCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

CachedEmbeddingProvider::CachedEmbeddingProvider(std::shared_ptr<const EmbeddingProvider> inner,
                                                 std::shared_ptr<EmbeddingCache> cache)
    : inner_(std::move(inner)), cache_(std::move(cache)), id_(inner_->provider_id()), dim_(inner_->dim()) {}

CachedEmbeddingProvider::CachedEmbeddingProvider(std::string provider_id, int dim,
                                                 std::shared_ptr<EmbeddingCache> cache)
    : cache_(std::move(cache)), id_(std::move(provider_id)), dim_(dim) {}

std::vector<Vector> CachedEmbeddingProvider::embed_tokens(std::string_view text) const {
  if (!inner_) return {embed_mean(text)};
  return inner_->embed_tokens(text);
}

Vector CachedEmbeddingProvider::embed_mean(std::string_view text) const {
  const auto k = EmbeddingCache::key(id_, text);
  if (auto hit = cache_->find(k)) return *hit;
  if (!inner_) throw DataError("no cached embedding for '" + std::string(text) + "'");
  Vector v = inner_->embed_mean(text);
  cache_->insert(k, v);
  return v;
}

std::shared_ptr<const EmbeddingProvider> EmbeddingSpec::build() const {
  if (provider == "stub") {
    auto stub = std::make_shared<StubEmbeddingProvider>(dim, seed);
    if (cache_path.empty()) return stub;
    return std::make_shared<CachedEmbeddingProvider>(stub, std::make_shared<EmbeddingCache>(cache_path));
  }
  if (provider == "cache") {
    if (provider_id.empty()) throw ConfigError("embedding provider 'cache' needs a provider_id");
    if (!std::filesystem::exists(cache_path))
      throw MissingArtifactError("embedding cache file " + cache_path.string() + " does not exist");
    return std::make_shared<CachedEmbeddingProvider>(provider_id, dim, std::make_shared<EmbeddingCache>(cache_path));
  }
  throw ConfigError("unknown embedding provider '" + provider + "'");
}

void to_json(nlohmann::json& j, const EmbeddingSpec& s) {
  j = {{"provider", s.provider}, {"dim", s.dim}, {"seed", s.seed}};
  if (!s.provider_id.empty()) j["provider_id"] = s.provider_id;
  if (!s.cache_path.empty()) j["cache_path"] = s.cache_path.string();
}

void from_json(const nlohmann::json& j, EmbeddingSpec& s) {
  s = EmbeddingSpec{};
  s.provider = j.value("provider", s.provider);
  s.dim = j.value("dim", s.dim);
  s.seed = j.value("seed", s.seed);
  s.provider_id = j.value("provider_id", std::string{});
  s.cache_path = j.value("cache_path", std::string{});
  if (s.dim < 1) throw ConfigError("embedding dim must be positive");
}

std::string categorical_text(std::string_view name, std::string_view value) {
  std::string text(name);
  text += ": ";
  text += value;
  return text;
}

Vector embed_feature_value(const EmbeddingProvider& provider, const FeatureDescriptor& feature,
                           const FeatureValue& value, const NormStats& norm_stats) {
  expects(!feature.name.empty(), "feature name must not be empty");
  if (feature.kind == FeatureKind::categorical) {
    const auto* text = std::get_if<std::string>(&value);
    expects(text != nullptr, "categorical feature '" + feature.name + "' needs a text value");
    return provider.embed_mean(categorical_text(feature.name, *text));
  }
  const auto* raw = std::get_if<double>(&value);
  expects(raw != nullptr, "numerical feature '" + feature.name + "' needs a real value");
  const double x = norm_stats.normalize_value(feature.name, *raw);
  return provider.embed_mean(feature.name) * x;
}

FeatureEmbedder::FeatureEmbedder(std::shared_ptr<const EmbeddingProvider> provider, Metadata metadata,
                                 NormStats norm_stats)
    : provider_(std::move(provider)), metadata_(std::move(metadata)), norm_stats_(std::move(norm_stats)) {
  for (const auto& f : metadata_.features)
    name_vectors_.push_back(f.kind == FeatureKind::numerical ? provider_->embed_mean(f.name) : Vector{});
}

Matrix FeatureEmbedder::embed_rows(std::span<const Sample> rows) const {
  const auto n = static_cast<Index>(metadata_.features.size());
  Matrix out(static_cast<Index>(rows.size()) * n, provider_->dim());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& sample = rows[r];
    expects(static_cast<Index>(sample.values.size()) == n, "row does not match the metadata schema");
    for (Index j = 0; j < n; ++j) {
      const auto& f = metadata_.features[static_cast<std::size_t>(j)];
      const Index at = static_cast<Index>(r) * n + j;
      if (f.kind == FeatureKind::numerical) {
        const auto* raw = std::get_if<double>(&sample.values[static_cast<std::size_t>(j)]);
        expects(raw != nullptr, "numerical feature '" + f.name + "' needs a real value");
        out.row(at) = name_vectors_[static_cast<std::size_t>(j)].transpose() * norm_stats_.normalize_value(f.name, *raw);
      } else {
        out.row(at) = embed_feature_value(*provider_, f, sample.values[static_cast<std::size_t>(j)], norm_stats_).transpose();
      }
    }
  }
  return out;
}

void to_json(nlohmann::json& j, const LlmCallSummary& s) {
  j = {{"preprocessing", s.preprocessing}, {"training", s.training}, {"inference", s.inference}, {"total", s.total()}};
}

void from_json(const nlohmann::json& j, LlmCallSummary& s) {
  s.preprocessing = j.at("preprocessing").get<long>();
  s.training = j.at("training").get<long>();
  s.inference = j.at("inference").get<long>();
}

}  // namespace latte
