#include "latte/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "latte/error.hpp"
#include "latte/io.hpp"
#include "latte/metrics.hpp"

namespace latte {

namespace {

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\n\r") == std::string::npos) return text;
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += "\"\"";
    else if (c == '\n' || c == '\r') out += ' ';
    else out += c;
  }
  return out + "\"";
}

std::string format_value(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string render_cell(const std::string& metric, const std::vector<double>& values, std::size_t failed) {
  if (values.empty()) return failed > 0 ? "failed" : "";
  std::string cell;
  if (metric == "auc") {
    std::vector<double> percent;
    for (double v : values) percent.push_back(100.0 * v);
    cell = format_fixed(mean_std(percent), 2);
  } else {
    cell = format_scientific(mean_std(values), 2);
  }
  if (failed > 0) cell += " [" + std::to_string(failed) + " failed]";
  return cell;
}

}  // namespace

ReferenceTable parse_references(const nlohmann::json& j) {
  ReferenceTable refs;
  if (j.is_null()) return refs;
  if (!j.is_object()) throw ConfigError("references must map dataset names to {shot: value} objects");
  for (const auto& [dataset, shots] : j.items()) {
    if (!shots.is_object()) throw ConfigError("references for '" + dataset + "' must be an object");
    for (const auto& [shot, cell] : shots.items()) {
      int k = 0;
      try {
        k = std::stoi(shot);
      } catch (const std::exception&) {
        throw ConfigError("reference shot '" + shot + "' is not an integer");
      }
      refs[dataset][k] = cell.is_string() ? cell.get<std::string>() : cell.dump();
    }
  }
  return refs;
}

std::string render_raw_results(const std::vector<MetricResult>& results) {
  std::string out = "dataset,variant,shot,seed,metric,value,error\n";
  for (const auto& r : results) {
    out += csv_field(r.dataset) + ',' + csv_field(r.variant) + ',' + std::to_string(r.shot) + ',' +
           std::to_string(r.seed) + ',' + csv_field(r.metric) + ',' + format_value(r.value) + ',' + csv_field(r.error) +
           '\n';
  }
  return out;
}

std::vector<MetricResult> parse_raw_results(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("dataset,variant,shot,seed,metric,value", 0) != 0)
    throw FormatError("raw results lack the expected header");
  std::vector<MetricResult> out;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto cells = split_delimited_line(line, ',');
    if (cells.size() != 7) throw FormatError("raw results row " + std::to_string(row) + " has " +
                                             std::to_string(cells.size()) + " fields, expected 7");
    MetricResult r;
    try {
      r.dataset = cells[0];
      r.variant = cells[1];
      r.shot = std::stoi(cells[2]);
      r.seed = std::stoull(cells[3]);
      r.metric = cells[4];
      r.value = cells[5] == "nan" ? std::nan("") : std::stod(cells[5]);
      r.error = cells[6];
    } catch (const std::exception&) {
      throw FormatError("raw results row " + std::to_string(row) + " is malformed");
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<MetricResult> read_raw_results(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingArtifactError("raw results file " + path.string() + " does not exist");
  return parse_raw_results(read_file(path));
}

std::string render_aggregate(const std::vector<MetricResult>& results, const ReferenceTable& references) {
  struct Row {
    std::string dataset, variant, metric;
  };
  std::vector<Row> rows;
  std::set<int> shot_set;
  std::map<std::tuple<std::string, std::string, std::string, int>, std::pair<std::vector<double>, std::size_t>> cells;
  for (const auto& r : results) {
    shot_set.insert(r.shot);
    auto same = [&](const Row& x) { return x.dataset == r.dataset && x.variant == r.variant && x.metric == r.metric; };
    if (std::none_of(rows.begin(), rows.end(), same)) rows.push_back({r.dataset, r.variant, r.metric});
    auto& cell = cells[{r.dataset, r.variant, r.metric, r.shot}];
    if (r.error.empty() && !std::isnan(r.value))
      cell.first.push_back(r.value);
    else
      ++cell.second;
  }
  std::set<int> ref_shots;
  for (const auto& row : rows)
    if (auto it = references.find(row.dataset); it != references.end())
      for (const auto& [shot, text] : it->second) ref_shots.insert(shot);

  std::string out =
      "<!-- mean ± population std over seeds (divide by N); AUC in percent; MSE in normalized target space -->\n";
  out += "| dataset | variant | metric |";
  for (int s : shot_set) out += " shot " + std::to_string(s) + " |";
  for (int s : ref_shots) out += " reference shot " + std::to_string(s) + " |";
  out += "\n|---|---|---|";
  for (std::size_t i = 0; i < shot_set.size() + ref_shots.size(); ++i) out += "---|";
  out += '\n';
  for (const auto& row : rows) {
    out += "| " + row.dataset + " | " + row.variant + " | " + row.metric + " |";
    for (int s : shot_set) {
      auto it = cells.find({row.dataset, row.variant, row.metric, s});
      out += ' ';
      if (it != cells.end()) out += render_cell(row.metric, it->second.first, it->second.second);
      out += " |";
    }
    for (int s : ref_shots) {
      out += ' ';
      if (auto d = references.find(row.dataset); d != references.end())
        if (auto c = d->second.find(s); c != d->second.end()) out += c->second;
      out += " |";
    }
    out += '\n';
  }
  return out;
}

ReportPaths default_report_paths(const std::filesystem::path& output_dir) {
  return {output_dir / "results_raw.csv", output_dir / "results_aggregate.md", output_dir / "summary.json"};
}

void emit_report(const ExperimentReport& report, const ReportPaths& paths, const ReferenceTable& references) {
  if (report.results.empty()) throw ContractViolation("report has no results");
  write_file_atomic(paths.raw, render_raw_results(report.results));
  write_file_atomic(paths.aggregate, render_aggregate(report.results, references));
  std::size_t failed = 0;
  for (const auto& r : report.results) failed += r.error.empty() ? 0 : 1;
  const nlohmann::json summary = {{"llm_call_summary", report.llm_calls},
                                  {"results", report.results.size()},
                                  {"failed_cells", failed},
                                  {"std", "population"}};
  write_file_atomic(paths.summary, summary.dump(2) + "\n");
}

void regenerate_aggregate(const ReportPaths& paths, const ReferenceTable& references) {
  write_file_atomic(paths.aggregate, render_aggregate(read_raw_results(paths.raw), references));
}

}  // namespace latte
