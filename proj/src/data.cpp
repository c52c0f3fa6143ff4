#include "latte/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "latte/error.hpp"
#include "latte/rng.hpp"

namespace latte {

namespace {

bool is_missing_numeric(std::string_view cell) {
  return cell.empty() || cell == "?" || cell == "NA" || cell == "NaN" || cell == "nan";
}

std::optional<double> parse_double(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t')) text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) return std::nullopt;
  return value;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

std::string to_string(FeatureKind kind) {
  return kind == FeatureKind::categorical ? "categorical" : "numerical";
}

std::string to_string(TaskType type) {
  return type == TaskType::classification ? "classification" : "regression";
}

FeatureKind parse_feature_kind(std::string_view text) {
  if (text == "categorical") return FeatureKind::categorical;
  if (text == "numerical") return FeatureKind::numerical;
  throw SchemaError("unknown feature kind '" + std::string(text) + "'");
}

TaskType parse_task_type(std::string_view text) {
  if (text == "classification") return TaskType::classification;
  if (text == "regression") return TaskType::regression;
  throw SchemaError("unknown task type '" + std::string(text) + "'");
}

void Metadata::validate() const {
  if (features.empty()) throw SchemaError("metadata lists no features");
  std::set<std::string> seen;
  for (const auto& f : features) {
    if (f.name.empty()) throw SchemaError("feature with empty name");
    if (!seen.insert(f.name).second) throw SchemaError("duplicate feature name '" + f.name + "'");
  }
  if (label_column.empty()) throw SchemaError("metadata has no label_column");
  if (seen.count(label_column)) throw SchemaError("label column '" + label_column + "' is also a feature");
  if (task_type == TaskType::classification && class_names.size() < 2)
    throw SchemaError("classification requires at least two class names");
  if (task_type == TaskType::regression && !class_names.empty())
    throw SchemaError("regression metadata must not list class names");
}

std::size_t Metadata::feature_index(std::string_view name) const {
  for (std::size_t i = 0; i < features.size(); ++i)
    if (features[i].name == name) return i;
  throw SchemaError("unknown feature '" + std::string(name) + "'");
}

void to_json(nlohmann::json& j, const Metadata& m) {
  j = nlohmann::json::object();
  j["task_description"] = m.task_description;
  j["task_type"] = to_string(m.task_type);
  j["label_column"] = m.label_column;
  if (!m.split_column.empty()) j["split_column"] = m.split_column;
  if (!m.class_names.empty()) j["class_names"] = m.class_names;
  auto features = nlohmann::json::array();
  for (const auto& f : m.features)
    features.push_back({{"name", f.name}, {"description", f.description}, {"kind", to_string(f.kind)}});
  j["features"] = std::move(features);
}

void from_json(const nlohmann::json& j, Metadata& m) {
  try {
    m = Metadata{};
    m.task_description = j.at("task_description").get<std::string>();
    m.task_type = parse_task_type(j.at("task_type").get<std::string>());
    m.label_column = j.at("label_column").get<std::string>();
    if (j.contains("split_column")) m.split_column = j["split_column"].get<std::string>();
    if (j.contains("class_names")) m.class_names = j["class_names"].get<std::vector<std::string>>();
    for (const auto& f : j.at("features")) {
      FeatureDescriptor d;
      d.name = f.at("name").get<std::string>();
      d.description = f.value("description", "");
      d.kind = parse_feature_kind(f.at("kind").get<std::string>());
      m.features.push_back(std::move(d));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("metadata: ") + e.what());
  }
  m.validate();
}

Metadata load_metadata(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metadata file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("metadata file " + path.string() + " is not valid JSON: " + e.what());
  }
  return j.get<Metadata>();
}

const FeatureValue& Sample::value(const Metadata& metadata, std::string_view name) const {
  return values.at(metadata.feature_index(name));
}

std::size_t Sample::class_index() const {
  expects(label.has_value(), "sample has no label");
  return static_cast<std::size_t>(*label);
}

double NormStats::normalize_value(const std::string& feature, double raw) const {
  if (std::isnan(raw)) return 0.0;
  auto it = numeric.find(feature);
  if (it == numeric.end()) throw ContractViolation("no norm stats for feature '" + feature + "'");
  return (raw - it->second.mean) / it->second.scale();
}

double NormStats::normalize_target(double y) const {
  if (!target) return y;
  return (y - target->min) / target->span();
}

double NormStats::denormalize_target(double y) const {
  if (!target) return y;
  return y * target->span() + target->min;
}

void to_json(nlohmann::json& j, const NormStats& s) {
  j = nlohmann::json::object();
  auto numeric = nlohmann::json::object();
  for (const auto& [name, st] : s.numeric) numeric[name] = {{"mean", st.mean}, {"std", st.std}};
  j["numeric"] = std::move(numeric);
  if (s.target) j["target"] = {{"min", s.target->min}, {"max", s.target->max}};
}

void from_json(const nlohmann::json& j, NormStats& s) {
  s = NormStats{};
  for (const auto& [name, st] : j.at("numeric").items())
    s.numeric[name] = NumericStats{st.at("mean").get<double>(), st.at("std").get<double>()};
  if (j.contains("target"))
    s.target = TargetRange{j["target"].at("min").get<double>(), j["target"].at("max").get<double>()};
}

std::vector<std::string> split_delimited_line(std::string_view line, char delimiter) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delimiter) {
      cells.push_back(std::move(cell));
      cell.clear();
    } else {
      cell += c;
    }
  }
  if (quoted) throw ParseError("unterminated quoted field");
  cells.push_back(std::move(cell));
  return cells;
}

TabularDataset load_dataset(const std::filesystem::path& data_path,
                            const std::filesystem::path& metadata_path, char delimiter) {
  return load_dataset(data_path, load_metadata(metadata_path), delimiter);
}

TabularDataset load_dataset(const std::filesystem::path& data_path, const Metadata& metadata,
                            char delimiter) {
  metadata.validate();
  std::ifstream in(data_path);
  if (!in) throw IoError("cannot open data file " + data_path.string());

  std::string line;
  if (!std::getline(in, line)) throw SchemaError("data file " + data_path.string() + " is empty");
  const auto header = split_delimited_line(strip_cr(line), delimiter);
  auto column_of = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("missing column '" + name + "' in " + data_path.string());
    return static_cast<std::size_t>(it - header.begin());
  };

  std::vector<std::size_t> feature_columns;
  for (const auto& f : metadata.features) feature_columns.push_back(column_of(f.name));
  const std::size_t label_col = column_of(metadata.label_column);
  const std::optional<std::size_t> split_col =
      metadata.split_column.empty() ? std::nullopt : std::optional(column_of(metadata.split_column));

  TabularDataset dataset;
  dataset.metadata = metadata;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto cells = split_delimited_line(line, delimiter);
    if (cells.size() != header.size())
      throw ParseError("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                       " cells, got " + std::to_string(cells.size()));
    Sample sample;
    sample.values.reserve(metadata.features.size());
    for (std::size_t j = 0; j < metadata.features.size(); ++j) {
      const auto& cell = cells[feature_columns[j]];
      if (metadata.features[j].kind == FeatureKind::categorical) {
        sample.values.emplace_back(cell.empty() ? std::string(kMissingToken) : cell);
      } else if (is_missing_numeric(cell)) {
        sample.values.emplace_back(std::numeric_limits<double>::quiet_NaN());
      } else {
        auto v = parse_double(cell);
        if (!v)
          throw ParseError("row " + std::to_string(row) + ": cannot parse '" + cell + "' as a number for feature '" +
                           metadata.features[j].name + "'");
        sample.values.emplace_back(*v);
      }
    }

    const auto& label_cell = cells[label_col];
    if (!label_cell.empty()) {
      if (metadata.is_classification()) {
        auto it = std::find(metadata.class_names.begin(), metadata.class_names.end(), label_cell);
        if (it != metadata.class_names.end()) {
          sample.label = static_cast<double>(it - metadata.class_names.begin());
        } else {
          auto v = parse_double(label_cell);
          if (!v || *v != std::floor(*v) || *v < 0 || *v >= static_cast<double>(metadata.num_classes()))
            throw ParseError("row " + std::to_string(row) + ": unknown class label '" + label_cell + "'");
          sample.label = *v;
        }
      } else {
        auto v = parse_double(label_cell);
        if (!v) throw ParseError("row " + std::to_string(row) + ": cannot parse target '" + label_cell + "'");
        sample.label = *v;
      }
    }

    const bool is_test = split_col && cells[*split_col] == "test";
    if (is_test) {
      if (!sample.label) throw SchemaError("row " + std::to_string(row) + ": test row without label");
      dataset.test.push_back(std::move(sample));
    } else if (sample.label) {
      dataset.labeled.push_back(std::move(sample));
    } else {
      dataset.unlabeled.push_back(std::move(sample));
    }
    ++row;
  }
  dataset.norm_stats = compute_norm_stats(dataset);
  return dataset;
}

NormStats compute_norm_stats(const TabularDataset& dataset) {
  const auto& meta = dataset.metadata;
  expects(!dataset.labeled.empty() || !dataset.unlabeled.empty(), "norm stats need at least one row");
  NormStats stats;
  for (std::size_t j = 0; j < meta.features.size(); ++j) {
    if (meta.features[j].kind != FeatureKind::numerical) continue;
    double sum = 0.0;
    std::size_t count = 0;
    auto visit = [&](auto&& fn) {
      for (const auto* split : {&dataset.labeled, &dataset.unlabeled})
        for (const auto& s : *split) {
          const double v = std::get<double>(s.values[j]);
          if (!std::isnan(v)) fn(v);
        }
    };
    visit([&](double v) {
      sum += v;
      ++count;
    });
    NumericStats st;
    if (count > 0) {
      st.mean = sum / static_cast<double>(count);
      double sq = 0.0;
      visit([&](double v) { sq += (v - st.mean) * (v - st.mean); });
      st.std = std::sqrt(sq / static_cast<double>(count));
    }
    stats.numeric[meta.features[j].name] = st;
  }
  if (meta.task_type == TaskType::regression && !dataset.labeled.empty()) {
    TargetRange range{*dataset.labeled.front().label, *dataset.labeled.front().label};
    for (const auto& s : dataset.labeled) {
      range.min = std::min(range.min, *s.label);
      range.max = std::max(range.max, *s.label);
    }
    stats.target = range;
  }
  return stats;
}

void hold_out_test(TabularDataset& dataset, double fraction, std::uint64_t seed) {
  if (!dataset.test.empty() || fraction <= 0.0) return;
  expects(fraction < 1.0, "test fraction must be below 1");
  Rng rng(stream_seed(seed, "holdout"));
  std::vector<std::vector<std::size_t>> groups;
  if (dataset.metadata.is_classification()) {
    groups.resize(dataset.metadata.num_classes());
    for (std::size_t i = 0; i < dataset.labeled.size(); ++i)
      groups[dataset.labeled[i].class_index()].push_back(i);
  } else {
    groups.emplace_back(dataset.labeled.size());
    for (std::size_t i = 0; i < dataset.labeled.size(); ++i) groups[0][i] = i;
  }
  std::vector<bool> to_test(dataset.labeled.size(), false);
  for (auto& g : groups) {
    rng.shuffle(g);
    const auto take = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(g.size())));
    for (std::size_t i = 0; i < take; ++i) to_test[g[i]] = true;
  }
  std::vector<Sample> keep;
  for (std::size_t i = 0; i < dataset.labeled.size(); ++i)
    (to_test[i] ? dataset.test : keep).push_back(std::move(dataset.labeled[i]));
  dataset.labeled = std::move(keep);
  dataset.norm_stats = compute_norm_stats(dataset);
}

void to_json(nlohmann::json& j, const FewShotSplit& s) {
  j = {{"shot", s.shot}, {"seed", s.seed}, {"labeled_indices", s.labeled_indices}};
}

void from_json(const nlohmann::json& j, FewShotSplit& s) {
  s.shot = j.at("shot").get<int>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.labeled_indices = j.at("labeled_indices").get<std::vector<std::size_t>>();
}

FewShotSplit sample_few_shot(const TabularDataset& dataset, int shot, std::uint64_t seed) {
  expects(shot >= 1, "shot must be at least 1");
  FewShotSplit split;
  split.shot = shot;
  split.seed = seed;
  Rng rng(stream_seed(seed, "few-shot"));
  const auto& meta = dataset.metadata;
  const auto want = static_cast<std::size_t>(shot);

  if (meta.is_classification()) {
    std::vector<std::vector<std::size_t>> by_class(meta.num_classes());
    for (std::size_t i = 0; i < dataset.labeled.size(); ++i)
      by_class[dataset.labeled[i].class_index()].push_back(i);
    for (std::size_t c = 0; c < by_class.size(); ++c) {
      auto& pool = by_class[c];
      if (pool.empty()) throw ContractViolation("class '" + meta.class_names[c] + "' has no labeled samples");
      rng.shuffle(pool);
      if (pool.size() < want)
        split.warnings.push_back("class '" + meta.class_names[c] + "' has only " + std::to_string(pool.size()) +
                                 " labeled samples; requested " + std::to_string(shot));
      const std::size_t take = std::min(want, pool.size());
      split.labeled_indices.insert(split.labeled_indices.end(), pool.begin(), pool.begin() + take);
    }
  } else {
    std::vector<std::size_t> pool(dataset.labeled.size());
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    rng.shuffle(pool);
    if (pool.size() < want)
      split.warnings.push_back("only " + std::to_string(pool.size()) + " labeled samples; requested " +
                               std::to_string(shot));
    pool.resize(std::min(want, pool.size()));
    split.labeled_indices = std::move(pool);
  }
  return split;
}

}  // namespace latte
