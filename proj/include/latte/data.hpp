#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

namespace latte {

enum class FeatureKind { categorical, numerical };
enum class TaskType { classification, regression };

std::string to_string(FeatureKind kind);
std::string to_string(TaskType type);
FeatureKind parse_feature_kind(std::string_view text);
TaskType parse_task_type(std::string_view text);

/// Token substituted for empty categorical cells.
inline constexpr std::string_view kMissingToken = "missing";

struct FeatureDescriptor {
  std::string name;
  std::string description;
  FeatureKind kind = FeatureKind::numerical;

  bool operator==(const FeatureDescriptor&) const = default;
};

/// Task description, feature definitions and label layout of one table.
struct Metadata {
  std::string task_description;
  std::vector<FeatureDescriptor> features;
  TaskType task_type = TaskType::classification;
  std::vector<std::string> class_names;
  std::string label_column;
  /// Optional column whose value "test" routes a row to the test split.
  std::string split_column;

  /// Throws SchemaError if any invariant is broken.
  void validate() const;
  std::size_t feature_index(std::string_view name) const;
  std::size_t num_classes() const { return class_names.size(); }
  bool is_classification() const { return task_type == TaskType::classification; }

  bool operator==(const Metadata&) const = default;
};

void to_json(nlohmann::json& j, const Metadata& m);
void from_json(const nlohmann::json& j, Metadata& m);
Metadata load_metadata(const std::filesystem::path& path);

/// Categorical cells hold text, numerical cells a double (NaN when missing).
using FeatureValue = std::variant<std::string, double>;

/// One table row. `values` is aligned with Metadata::features.
struct Sample {
  std::vector<FeatureValue> values;
  /// Class index (classification) or raw target (regression).
  std::optional<double> label;

  const FeatureValue& value(const Metadata& metadata, std::string_view name) const;
  std::size_t class_index() const;

  bool operator==(const Sample&) const = default;
};

struct NumericStats {
  double mean = 0.0;
  double std = 0.0;
  /// Divisor used when normalizing; constant features are left unscaled.
  double scale() const { return std > 0.0 ? std : 1.0; }
};

struct TargetRange {
  double min = 0.0;
  double max = 1.0;
  double span() const { return max > min ? max - min : 1.0; }
};

struct NormStats {
  std::map<std::string, NumericStats> numeric;
  std::optional<TargetRange> target;

  /// z-score of a raw numerical value; missing (NaN) maps to 0.
  double normalize_value(const std::string& feature, double raw) const;
  double normalize_target(double y) const;
  double denormalize_target(double y) const;
};

void to_json(nlohmann::json& j, const NormStats& s);
void from_json(const nlohmann::json& j, NormStats& s);

struct TabularDataset {
  Metadata metadata;
  std::vector<Sample> labeled;
  std::vector<Sample> unlabeled;
  std::vector<Sample> test;
  NormStats norm_stats;
};

/// Parses a delimiter-separated file with a header row using `metadata_path`
/// for the schema. Rows with an empty label cell become unlabeled.
TabularDataset load_dataset(const std::filesystem::path& data_path,
                            const std::filesystem::path& metadata_path, char delimiter = ',');
TabularDataset load_dataset(const std::filesystem::path& data_path, const Metadata& metadata,
                            char delimiter = ',');

/// Feature statistics over labeled and unlabeled rows; target range over
/// labeled rows only.
NormStats compute_norm_stats(const TabularDataset& dataset);

/// Moves a stratified `fraction` of the labeled rows into the test split
/// and recomputes norm stats. No-op when the test split is already populated.
void hold_out_test(TabularDataset& dataset, double fraction, std::uint64_t seed);

struct FewShotSplit {
  int shot = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> labeled_indices;
  std::vector<std::string> warnings;
};

void to_json(nlohmann::json& j, const FewShotSplit& s);
void from_json(const nlohmann::json& j, FewShotSplit& s);

/// Per-class draw for classification, total draw for regression.
FewShotSplit sample_few_shot(const TabularDataset& dataset, int shot, std::uint64_t seed);

std::vector<std::string> split_delimited_line(std::string_view line, char delimiter);

}  // namespace latte
