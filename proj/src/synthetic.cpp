#include "latte/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "latte/error.hpp"
#include "latte/io.hpp"
#include "latte/rng.hpp"

namespace latte {

namespace {

std::string number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Row {
  std::vector<double> x;
  std::string label;
  bool test = false;
};

GeneratedDataset write_files(const std::filesystem::path& dir, const std::string& stem, const Metadata& metadata,
                             const std::vector<Row>& rows) {
  std::string csv;
  for (const auto& f : metadata.features) csv += f.name + ',';
  csv += metadata.label_column + ',' + metadata.split_column + '\n';
  for (const auto& r : rows) {
    for (double v : r.x) csv += number(v) + ',';
    csv += r.label + ',' + (r.test ? "test" : "train") + '\n';
  }
  GeneratedDataset out{dir / (stem + ".csv"), dir / (stem + ".json")};
  nlohmann::json meta = metadata;
  write_file_atomic(out.data, csv);
  write_file_atomic(out.metadata, meta.dump(2) + "\n");
  return out;
}

Metadata classification_metadata(std::string task, std::vector<FeatureDescriptor> features) {
  Metadata m;
  m.task_description = std::move(task);
  m.features = std::move(features);
  m.task_type = TaskType::classification;
  m.class_names = {"no", "yes"};
  m.label_column = "label";
  m.split_column = "split";
  m.validate();
  return m;
}

std::vector<double> draw_normals(Rng& rng, int n) {
  std::vector<double> out(static_cast<std::size_t>(n));
  for (auto& v : out) v = rng.normal();
  return out;
}

}  // namespace

GeneratedDataset write_blob_dataset(const std::filesystem::path& dir, const BlobSpec& spec, const std::string& stem) {
  const auto meta = classification_metadata(
      "Predict whether a patient develops the condition from two lab measurements.",
      {{"glucose", "fasting plasma glucose, standardized units", FeatureKind::numerical},
       {"insulin", "two-hour serum insulin, standardized units", FeatureKind::numerical}});
  Rng rng(spec.seed);
  // Class means sit at +-separation/2 along the diagonal, unit variance per axis.
  const double offset = spec.separation / (2.0 * std::sqrt(2.0));
  auto draw = [&](int cls) {
    const double c = cls == 1 ? offset : -offset;
    return std::vector<double>{c + rng.normal(), c + rng.normal()};
  };
  std::vector<Row> rows;
  for (int i = 0; i < 2 * spec.labeled_per_class; ++i) {
    const int cls = i % 2;
    rows.push_back({draw(cls), std::to_string(cls), false});
  }
  for (int i = 0; i < spec.unlabeled; ++i) rows.push_back({draw(static_cast<int>(rng.index(2))), "", false});
  for (int i = 0; i < spec.test; ++i) {
    const int cls = i % 2;
    rows.push_back({draw(cls), std::to_string(cls), true});
  }
  return write_files(dir, stem, meta, rows);
}

GeneratedDataset write_identity_dataset(const std::filesystem::path& dir, const IdentitySpec& spec,
                                        const std::string& stem) {
  const auto meta = classification_metadata(
      "Predict whether the sensor reports an alarm.",
      {{"pressure", "line pressure reading, standardized", FeatureKind::numerical},
       {"humidity", "ambient humidity reading, standardized", FeatureKind::numerical}});
  Rng rng(spec.seed);
  auto draw_with_label = [&](int cls) {
    // Rejection keeps the label rule 1[pressure > 0] and a balanced draw.
    for (;;) {
      std::vector<double> x{rng.normal(), rng.normal()};
      if ((x[0] > 0.0 ? 1 : 0) == cls) return x;
    }
  };
  std::vector<Row> rows;
  for (int i = 0; i < 2 * spec.labeled_per_class; ++i) rows.push_back({draw_with_label(i % 2), std::to_string(i % 2), false});
  for (int i = 0; i < spec.unlabeled; ++i) rows.push_back({{rng.normal(), rng.normal()}, "", false});
  for (int i = 0; i < spec.test; ++i) rows.push_back({draw_with_label(i % 2), std::to_string(i % 2), true});
  return write_files(dir, stem, meta, rows);
}

namespace {

struct RegressionDraw {
  std::vector<std::vector<double>> x;
  std::vector<double> signal;
  std::vector<double> noise;
  std::vector<bool> labeled;
  std::vector<bool> test;
};

RegressionDraw draw_regression(const RegressionSpec& spec) {
  if (spec.features < 1 || spec.labeled < 2) throw ConfigError("regression generator needs features and labeled rows");
  Rng rng(spec.seed);
  std::vector<double> w(static_cast<std::size_t>(spec.features));
  for (int j = 0; j < spec.features; ++j) w[static_cast<std::size_t>(j)] = (j % 2 == 0 ? 1.0 : -1.0) / (1.0 + j);
  RegressionDraw d;
  auto add = [&](bool labeled, bool test) {
    auto x = draw_normals(rng, spec.features);
    double s = 0.0;
    for (int j = 0; j < spec.features; ++j) s += w[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(j)];
    d.x.push_back(std::move(x));
    d.signal.push_back(s);
    d.noise.push_back(rng.normal());
    d.labeled.push_back(labeled);
    d.test.push_back(test);
  };
  for (int i = 0; i < spec.labeled; ++i) add(true, false);
  for (int i = 0; i < spec.unlabeled; ++i) add(false, false);
  for (int i = 0; i < spec.test; ++i) add(false, true);
  return d;
}

double labeled_range(const RegressionDraw& d, double c) {
  double lo = INFINITY;
  double hi = -INFINITY;
  for (std::size_t i = 0; i < d.signal.size(); ++i) {
    if (!d.labeled[i]) continue;
    const double y = d.signal[i] + c * d.noise[i];
    lo = std::min(lo, y);
    hi = std::max(hi, y);
  }
  return hi - lo;
}

double solve_noise_scale(const RegressionDraw& d, double target) {
  // Find c with c / range(signal + c * noise) == target over the labeled rows.
  auto f = [&](double c) { return c / labeled_range(d, c) - target; };
  double lo = 0.0;
  double hi = target * labeled_range(d, 0.0);
  while (f(hi) < 0.0) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

double regression_noise_scale(const RegressionSpec& spec) {
  return solve_noise_scale(draw_regression(spec), spec.noise);
}

GeneratedDataset write_regression_dataset(const std::filesystem::path& dir, const RegressionSpec& spec,
                                          const std::string& stem) {
  const auto d = draw_regression(spec);
  const double c = solve_noise_scale(d, spec.noise);
  Metadata meta;
  meta.task_description = "Predict the age of a shellfish from its physical measurements.";
  static const char* names[] = {"length", "diameter", "height", "shell_weight", "whole_weight", "shucked_weight"};
  for (int j = 0; j < spec.features; ++j) {
    const std::string name = j < 6 ? names[j] : "measure_" + std::to_string(j);
    meta.features.push_back({name, name + " of the specimen, standardized", FeatureKind::numerical});
  }
  meta.task_type = TaskType::regression;
  meta.label_column = "rings";
  meta.split_column = "split";
  meta.validate();
  std::vector<Row> rows;
  for (std::size_t i = 0; i < d.x.size(); ++i) {
    const bool has_label = d.labeled[i] || d.test[i];
    rows.push_back({d.x[i], has_label ? number(10.0 + d.signal[i] + c * d.noise[i]) : "", d.test[i]});
  }
  return write_files(dir, stem, meta, rows);
}

KnowledgeVector write_stub_knowledge(const std::filesystem::path& path, const Metadata& metadata, int dim, int layer,
                                     std::uint64_t seed) {
  auto k = stub_knowledge_vector(metadata, dim, layer, seed);
  write_knowledge_file(path, k);
  return k;
}

}  // namespace latte
