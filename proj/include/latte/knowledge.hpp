#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "latte/data.hpp"
#include "latte/embed.hpp"
#include "latte/tensor.hpp"

namespace latte {

/// Identifier of the prompt template below; bump when the wording changes.
inline constexpr std::string_view kPromptTemplateId = "latte-prompt-v1";
/// Layer value meaning "last transformer layer" on the wire.
inline constexpr int kLastLayer = -1;
inline constexpr int kDefaultLayer = 30;

/// Task description, one "– <name>: <description>" line per feature, then
/// the class names for classification tasks.
std::string render_knowledge_prompt(const Metadata& metadata);

/// Accepts an integer or the alias "last".
int parse_layer(const nlohmann::json& value);

/// Average-pooled hidden state of the rendered metadata prompt.
struct KnowledgeVector {
  Vector vector;
  std::string model_id;
  int layer = kDefaultLayer;
  std::string template_id{kPromptTemplateId};
  std::string prompt_hash;

  Index dim() const { return vector.size(); }
};

void to_json(nlohmann::json& j, const KnowledgeVector& k);
/// Validates dim and finiteness; throws FormatError / DataError.
void from_json(const nlohmann::json& j, KnowledgeVector& k);

KnowledgeVector read_knowledge_file(const std::filesystem::path& path);
/// Write-then-rename.
void write_knowledge_file(const std::filesystem::path& path, const KnowledgeVector& knowledge);

std::string prompt_hash(std::string_view prompt);

struct KnowledgeSource {
  enum class Kind { file, http };
  Kind kind = Kind::file;
  std::filesystem::path path;
  std::string url;
  int retries = 3;
  /// Expected hidden size; 0 accepts whatever the source reports.
  int expected_dim = 0;
  /// Expected/recorded model id; empty accepts any when reading a file.
  std::string model_id;

  static KnowledgeSource file(std::filesystem::path path);
  static KnowledgeSource http(std::string url);
  /// http when LATTE_HIDDEN_STATES_URL is set, otherwise file mode on `path`.
  static KnowledgeSource from_environment(std::filesystem::path path);
};

/// Mean of the per-token hidden states in an endpoint response.
Vector pool_hidden_states(const nlohmann::json& response, int expected_dim = 0);

/// Reads a stored vector (no LLM call) or queries the hidden-states endpoint
/// once and average-pools the response (one preprocessing call).
KnowledgeVector extract_task_knowledge(const KnowledgeSource& source, const Metadata& metadata, int layer,
                                       LlmCallCounter& counter);

/// Deterministic stand-in for an LLM's per-token hidden states.
std::vector<Vector> stub_hidden_states(std::string_view prompt, int dim, int layer, std::uint64_t seed);
KnowledgeVector stub_knowledge_vector(const Metadata& metadata, int dim, int layer, std::uint64_t seed);

/// Body of a hidden-states response for the given per-token states.
nlohmann::json hidden_states_response(const std::vector<Vector>& states);

}  // namespace latte
