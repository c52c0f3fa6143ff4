#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "latte/data.hpp"
#include "latte/embed.hpp"
#include "latte/experiment.hpp"
#include "latte/knowledge.hpp"

namespace latte {

struct DatasetSettings {
  std::string name = "dataset";
  std::filesystem::path data;
  std::filesystem::path metadata;
  char delimiter = ',';
  /// Used only when the data carries no test split.
  double test_fraction = 0.3;
  std::uint64_t split_seed = 0;
};

struct KnowledgeSettings {
  std::filesystem::path file = "knowledge.json";
  /// Hidden-states endpoint; LATTE_HIDDEN_STATES_URL overrides it.
  std::string url;
  int layer = kDefaultLayer;
  int dim = 0;
  std::string model_id;
  int retries = 3;

  KnowledgeSource source() const;
};

/// Single run configuration. Relative paths resolve against the directory
/// of the config file.
struct RunConfig {
  DatasetSettings dataset;
  KnowledgeSettings knowledge;
  EmbeddingSpec embedding;
  ModelSettings settings;
  std::vector<int> shots{4, 8, 16};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<Variant> variants{Variant{}};
  bool baseline = false;
  nlohmann::json references = nlohmann::json::object();
  std::filesystem::path output_dir = "latte-out";

  static RunConfig parse(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& path);

  /// Checks ranges and that the dataset files exist.
  void validate() const;
  /// Canonical JSON without the output directory.
  nlohmann::json to_json() const;
  /// Git-style hash of the canonical JSON.
  std::string hash() const;

  /// Loads the dataset and carves out a stratified test split when the file has none.
  TabularDataset load_dataset() const;
  ExperimentConfig experiment() const;
};

std::vector<int> parse_int_list(std::string_view text);
std::vector<std::uint64_t> parse_seed_list(std::string_view text);

}  // namespace latte
