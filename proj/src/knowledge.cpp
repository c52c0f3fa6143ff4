#include "latte/knowledge.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "latte/error.hpp"
#include "latte/hash.hpp"
#include "latte/io.hpp"
#include "latte/rng.hpp"

namespace latte {

namespace {

constexpr std::string_view kEndpointPath = "/v1/hidden_states";

struct ParsedUrl {
  std::string origin;  // scheme://host:port
  std::string path;
};

ParsedUrl parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("hidden-states URL '" + url + "' lacks a scheme");
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl parsed;
  parsed.origin = url.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  if (prefix.size() >= kEndpointPath.size() &&
      prefix.compare(prefix.size() - kEndpointPath.size(), kEndpointPath.size(), kEndpointPath) == 0)
    parsed.path = prefix;
  else
    parsed.path = prefix + std::string(kEndpointPath);
  return parsed;
}

void check_finite(const Vector& v, const std::string& what) {
  if (!v.allFinite()) throw DataError(what + " contains non-finite entries");
}

}  // namespace

std::string render_knowledge_prompt(const Metadata& metadata) {
  std::string prompt = metadata.task_description;
  prompt += "\nFeatures:\n";
  for (const auto& f : metadata.features) {
    prompt += "– ";
    prompt += f.name;
    prompt += ": ";
    prompt += f.description;
    prompt += '\n';
  }
  if (metadata.is_classification()) {
    prompt += "Classes:";
    for (std::size_t c = 0; c < metadata.class_names.size(); ++c) {
      prompt += c == 0 ? " " : ", ";
      prompt += metadata.class_names[c];
    }
    prompt += '\n';
  }
  return prompt;
}

int parse_layer(const nlohmann::json& value) {
  if (value.is_string()) {
    if (value.get<std::string>() == "last") return kLastLayer;
    throw ConfigError("layer must be an integer or \"last\"");
  }
  if (!value.is_number_integer()) throw ConfigError("layer must be an integer or \"last\"");
  const int layer = value.get<int>();
  if (layer < 0 && layer != kLastLayer) throw ConfigError("layer must be non-negative");
  return layer;
}

std::string prompt_hash(std::string_view prompt) { return git_blob_hash(prompt); }

void to_json(nlohmann::json& j, const KnowledgeVector& k) {
  j = {{"model_id", k.model_id},
       {"layer", k.layer},
       {"dim", k.vector.size()},
       {"template_id", k.template_id},
       {"prompt_hash", k.prompt_hash},
       {"vector", std::vector<double>(k.vector.data(), k.vector.data() + k.vector.size())}};
}

void from_json(const nlohmann::json& j, KnowledgeVector& k) {
  std::vector<double> values;
  int dim = 0;
  try {
    k.model_id = j.value("model_id", std::string{});
    k.layer = j.contains("layer") ? parse_layer(j["layer"]) : kDefaultLayer;
    k.template_id = j.value("template_id", std::string(kPromptTemplateId));
    k.prompt_hash = j.value("prompt_hash", std::string{});
    dim = j.at("dim").get<int>();
    for (const auto& v : j.at("vector")) {
      if (!v.is_number()) throw DataError("knowledge vector holds a non-numeric entry");
      values.push_back(v.get<double>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("knowledge vector: ") + e.what());
  }
  if (dim <= 0 || static_cast<std::size_t>(dim) != values.size())
    throw FormatError("knowledge vector declares dim " + std::to_string(dim) + " but holds " +
                      std::to_string(values.size()) + " values");
  k.vector = Eigen::Map<const Vector>(values.data(), dim);
  check_finite(k.vector, "knowledge vector");
}

KnowledgeVector read_knowledge_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingArtifactError("knowledge vector file " + path.string() + " does not exist");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("knowledge vector file " + path.string() + ": " + e.what());
  }
  return j.get<KnowledgeVector>();
}

void write_knowledge_file(const std::filesystem::path& path, const KnowledgeVector& knowledge) {
  nlohmann::json j = knowledge;
  write_file_atomic(path, j.dump(2) + "\n");
}

KnowledgeSource KnowledgeSource::file(std::filesystem::path path) {
  KnowledgeSource s;
  s.kind = Kind::file;
  s.path = std::move(path);
  return s;
}

KnowledgeSource KnowledgeSource::http(std::string url) {
  KnowledgeSource s;
  s.kind = Kind::http;
  s.url = std::move(url);
  return s;
}

KnowledgeSource KnowledgeSource::from_environment(std::filesystem::path path) {
  if (const char* url = std::getenv("LATTE_HIDDEN_STATES_URL"); url != nullptr && *url != '\0') {
    auto s = http(url);
    s.path = std::move(path);
    return s;
  }
  return file(std::move(path));
}

Vector pool_hidden_states(const nlohmann::json& response, int expected_dim) {
  int dim = 0;
  int tokens = 0;
  Vector sum;
  try {
    dim = response.at("dim").get<int>();
    tokens = response.at("tokens").get<int>();
    const auto& states = response.at("hidden_states");
    if (dim <= 0 || tokens <= 0) throw FormatError("hidden-states response has empty dim or token count");
    if (!states.is_array() || static_cast<int>(states.size()) != tokens)
      throw FormatError("hidden-states response lists " + std::to_string(states.size()) + " tokens, declared " +
                        std::to_string(tokens));
    sum = Vector::Zero(dim);
    for (const auto& row : states) {
      if (!row.is_array() || static_cast<int>(row.size()) != dim)
        throw FormatError("hidden state row width differs from declared dim " + std::to_string(dim));
      for (int i = 0; i < dim; ++i) {
        if (!row[static_cast<std::size_t>(i)].is_number()) throw DataError("hidden state holds a non-numeric entry");
        sum[i] += row[static_cast<std::size_t>(i)].get<double>();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("hidden-states response: ") + e.what());
  }
  if (expected_dim > 0 && dim != expected_dim)
    throw FormatError("hidden size " + std::to_string(dim) + " does not match declared d_llm " +
                      std::to_string(expected_dim));
  Vector mean = sum / static_cast<double>(tokens);
  check_finite(mean, "pooled hidden state");
  return mean;
}

KnowledgeVector extract_task_knowledge(const KnowledgeSource& source, const Metadata& metadata, int layer,
                                       LlmCallCounter& counter) {
  const std::string prompt = render_knowledge_prompt(metadata);
  if (source.kind == KnowledgeSource::Kind::file) {
    auto k = read_knowledge_file(source.path);
    if (source.expected_dim > 0 && k.dim() != source.expected_dim)
      throw FormatError("knowledge vector has dim " + std::to_string(k.dim()) + ", expected " +
                        std::to_string(source.expected_dim));
    if (!source.model_id.empty() && k.model_id != source.model_id)
      throw FormatError("knowledge vector comes from model '" + k.model_id + "', expected '" + source.model_id + "'");
    if (k.layer != layer)
      throw FormatError("knowledge vector was taken at layer " + std::to_string(k.layer) + ", expected " +
                        std::to_string(layer));
    return k;
  }

  const auto url = parse_url(source.url);
  httplib::Client client(url.origin);
  client.set_connection_timeout(5);
  client.set_read_timeout(120);
  const nlohmann::json request = {{"prompt", prompt}, {"layer", layer}};
  const int attempts = std::max(1, source.retries);
  std::string last_error = "no attempt made";
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    auto res = client.Post(url.path, request.dump(), "application/json");
    if (res && res->status == 200) {
      counter.add_preprocessing();
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(res->body);
      } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("hidden-states response is not JSON: ") + e.what());
      }
      KnowledgeVector k;
      k.vector = pool_hidden_states(body, source.expected_dim);
      k.model_id = body.value("model_id", source.model_id.empty() ? std::string("unknown") : source.model_id);
      k.layer = layer;
      k.template_id = std::string(kPromptTemplateId);
      k.prompt_hash = prompt_hash(prompt);
      return k;
    }
    if (res && res->status < 500) {
      counter.add_preprocessing();
      throw FormatError("hidden-states endpoint rejected the request with HTTP " + std::to_string(res->status));
    }
    last_error = res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error());
    if (attempt < attempts) std::this_thread::sleep_for(std::chrono::milliseconds(50 * attempt));
  }
  throw TransportError("hidden-states endpoint " + source.url + " unreachable: " + last_error, attempts);
}

std::vector<Vector> stub_hidden_states(std::string_view prompt, int dim, int layer, std::uint64_t seed) {
  return stub_embed_tokens(prompt, dim, mix_seed({seed, static_cast<std::uint64_t>(layer + 1)}));
}

KnowledgeVector stub_knowledge_vector(const Metadata& metadata, int dim, int layer, std::uint64_t seed) {
  const auto prompt = render_knowledge_prompt(metadata);
  const auto states = stub_hidden_states(prompt, dim, layer, seed);
  KnowledgeVector k;
  k.vector = Vector::Zero(dim);
  for (const auto& s : states) k.vector += s;
  k.vector /= static_cast<double>(states.size());
  k.model_id = "stub";
  k.layer = layer;
  k.prompt_hash = prompt_hash(prompt);
  return k;
}

nlohmann::json hidden_states_response(const std::vector<Vector>& states) {
  auto rows = nlohmann::json::array();
  for (const auto& s : states) rows.push_back(std::vector<double>(s.data(), s.data() + s.size()));
  return {{"dim", states.empty() ? 0 : states.front().size()}, {"tokens", states.size()}, {"hidden_states", rows}};
}

}  // namespace latte
