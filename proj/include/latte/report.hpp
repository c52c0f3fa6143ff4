#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "latte/experiment.hpp"

namespace latte {

/// Published numbers shown beside ours: dataset -> shot -> cell text.
using ReferenceTable = std::map<std::string, std::map<int, std::string>>;

ReferenceTable parse_references(const nlohmann::json& j);

/// CSV with header dataset,variant,shot,seed,metric,value,error.
std::string render_raw_results(const std::vector<MetricResult>& results);
std::vector<MetricResult> parse_raw_results(const std::string& text);
std::vector<MetricResult> read_raw_results(const std::filesystem::path& path);

/// Markdown grid of (dataset, variant) rows by shot columns. AUC cells are
/// percentages "m ± s", MSE cells use scientific notation.
std::string render_aggregate(const std::vector<MetricResult>& results, const ReferenceTable& references = {});

struct ReportPaths {
  std::filesystem::path raw;
  std::filesystem::path aggregate;
  std::filesystem::path summary;
};

ReportPaths default_report_paths(const std::filesystem::path& output_dir);

/// Writes the raw table, the aggregate grid and a JSON summary holding the
/// LLM call counts. All writes are atomic.
void emit_report(const ExperimentReport& report, const ReportPaths& paths, const ReferenceTable& references = {});

/// Rebuilds the aggregate grid from a raw results file.
void regenerate_aggregate(const ReportPaths& paths, const ReferenceTable& references = {});

}  // namespace latte
