#include "latte/config.hpp"

#include <charconv>
#include <cstdlib>

#include "latte/error.hpp"
#include "latte/hash.hpp"
#include "latte/io.hpp"

namespace latte {

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::filesystem::path& p) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return (base / p).lexically_normal();
}

template <typename T>
std::vector<T> parse_list(std::string_view text, const char* what) {
  std::vector<T> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find(',', start), text.size());
    const auto item = text.substr(start, end - start);
    T value{};
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), value);
    if (item.empty() || ec != std::errc{} || ptr != item.data() + item.size())
      throw ConfigError(std::string("invalid ") + what + " list '" + std::string(text) + "'");
    out.push_back(value);
    start = end + 1;
  }
  return out;
}

}  // namespace

std::vector<int> parse_int_list(std::string_view text) { return parse_list<int>(text, "shot"); }
std::vector<std::uint64_t> parse_seed_list(std::string_view text) { return parse_list<std::uint64_t>(text, "seed"); }

KnowledgeSource KnowledgeSettings::source() const {
  KnowledgeSource s;
  const char* env = std::getenv("LATTE_HIDDEN_STATES_URL");
  if (env != nullptr && *env != '\0') {
    s = KnowledgeSource::http(env);
  } else if (!url.empty()) {
    s = KnowledgeSource::http(url);
  } else {
    s = KnowledgeSource::file(file);
  }
  s.path = file;
  s.retries = retries;
  s.expected_dim = dim;
  s.model_id = model_id;
  return s;
}

RunConfig RunConfig::parse(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  RunConfig c;
  try {
    if (j.contains("dataset")) {
      const auto& d = j["dataset"];
      c.dataset.name = d.value("name", c.dataset.name);
      c.dataset.data = resolve(base_dir, d.value("data", std::string{}));
      c.dataset.metadata = resolve(base_dir, d.value("metadata", std::string{}));
      const auto delim = d.value("delimiter", std::string(","));
      if (delim.size() != 1) throw ConfigError("dataset delimiter must be a single character");
      c.dataset.delimiter = delim[0];
      c.dataset.test_fraction = d.value("test_fraction", c.dataset.test_fraction);
      c.dataset.split_seed = d.value("split_seed", c.dataset.split_seed);
    }
    if (j.contains("knowledge")) {
      const auto& k = j["knowledge"];
      c.knowledge.file = resolve(base_dir, k.value("file", c.knowledge.file.string()));
      c.knowledge.url = k.value("url", std::string{});
      if (k.contains("layer")) c.knowledge.layer = parse_layer(k["layer"]);
      c.knowledge.dim = k.value("dim", 0);
      c.knowledge.model_id = k.value("model_id", std::string{});
      c.knowledge.retries = k.value("retries", c.knowledge.retries);
    } else {
      c.knowledge.file = resolve(base_dir, c.knowledge.file);
    }
    if (j.contains("embedding")) {
      c.embedding = j["embedding"].get<EmbeddingSpec>();
      c.embedding.cache_path = resolve(base_dir, c.embedding.cache_path);
    }
    c.settings = j.get<ModelSettings>();
    if (j.contains("eval")) {
      const auto& e = j["eval"];
      if (e.contains("shots")) c.shots = e["shots"].get<std::vector<int>>();
      if (e.contains("seeds")) c.seeds = e["seeds"].get<std::vector<std::uint64_t>>();
      if (e.contains("variants")) {
        c.variants.clear();
        for (const auto& v : e["variants"]) c.variants.push_back(Variant::parse(v.get<std::string>()));
      }
      c.baseline = e.value("baseline", false);
      if (e.contains("references")) c.references = e["references"];
    }
    if (j.contains("output_dir")) c.output_dir = resolve(base_dir, j["output_dir"].get<std::string>());
    else c.output_dir = resolve(base_dir, c.output_dir);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingArtifactError("config file " + path.string() + " does not exist");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  return parse(j, path.parent_path());
}

void RunConfig::validate() const {
  if (dataset.data.empty() || dataset.metadata.empty()) throw ConfigError("dataset.data and dataset.metadata are required");
  if (!std::filesystem::exists(dataset.data))
    throw MissingArtifactError("dataset file " + dataset.data.string() + " does not exist");
  if (!std::filesystem::exists(dataset.metadata))
    throw MissingArtifactError("metadata file " + dataset.metadata.string() + " does not exist");
  if (!(dataset.test_fraction > 0.0 && dataset.test_fraction < 1.0))
    throw ConfigError("dataset.test_fraction must lie in (0, 1)");
  if (shots.empty() || seeds.empty() || variants.empty()) throw ConfigError("shots, seeds and variants must be non-empty");
  for (int s : shots)
    if (s < 1) throw ConfigError("shots must be positive");
  settings.encoder.validate();
  settings.adapter.validate(settings.encoder.model_dim);
  settings.pretrain.validate();
  settings.finetune.validate();
  if (embedding.provider == "cache" && !embedding.cache_path.empty() && !std::filesystem::exists(embedding.cache_path))
    throw MissingArtifactError("embedding cache " + embedding.cache_path.string() + " does not exist");
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = settings;
  j["dataset"] = {{"name", dataset.name},
                  {"data", dataset.data.string()},
                  {"metadata", dataset.metadata.string()},
                  {"delimiter", std::string(1, dataset.delimiter)},
                  {"test_fraction", dataset.test_fraction},
                  {"split_seed", dataset.split_seed}};
  j["knowledge"] = {{"file", knowledge.file.string()}, {"url", knowledge.url},       {"layer", knowledge.layer},
                    {"dim", knowledge.dim},            {"model_id", knowledge.model_id}, {"retries", knowledge.retries}};
  j["embedding"] = embedding;
  std::vector<std::string> names;
  for (const auto& v : variants) names.push_back(v.name());
  j["eval"] = {{"shots", shots}, {"seeds", seeds}, {"variants", names}, {"baseline", baseline},
               {"references", references}};
  return j;
}

std::string RunConfig::hash() const { return git_blob_hash(to_json().dump()); }

TabularDataset RunConfig::load_dataset() const {
  auto ds = latte::load_dataset(dataset.data, dataset.metadata, dataset.delimiter);
  if (ds.test.empty()) hold_out_test(ds, dataset.test_fraction, dataset.split_seed);
  return ds;
}

ExperimentConfig RunConfig::experiment() const {
  ExperimentConfig e;
  e.dataset_name = dataset.name;
  e.embedding = embedding;
  e.settings = settings;
  e.shots = shots;
  e.seeds = seeds;
  e.variants = variants;
  e.baseline = baseline;
  return e;
}

}  // namespace latte
