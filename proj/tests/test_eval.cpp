#include <doctest.h>

#include <cmath>

#include "latte/baseline.hpp"
#include "latte/error.hpp"
#include "latte/metrics.hpp"
#include "latte/report.hpp"
#include "model_support.hpp"

using namespace latte;
using latte::testing::numeric_metadata;
using latte::testing::TempDir;

namespace {

double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

void random_scores(Rng& rng, std::size_t n, std::vector<double>& s, std::vector<int>& y) {
  s.clear();
  y.clear();
  for (std::size_t i = 0; i < n; ++i) {
    s.push_back(static_cast<double>(rng.index(20)));
    y.push_back(static_cast<int>(rng.index(2)));
  }
  y[0] = 0;
  y[1] = 1;
}

TabularDataset in_memory(const Metadata& metadata, const Matrix& x, const std::vector<double>& labels,
                         std::size_t train_rows) {
  TabularDataset d;
  d.metadata = metadata;
  for (Index i = 0; i < x.rows(); ++i) {
    Sample s;
    for (Index j = 0; j < x.cols(); ++j) s.values.emplace_back(x(i, j));
    s.label = labels[static_cast<std::size_t>(i)];
    (static_cast<std::size_t>(i) < train_rows ? d.labeled : d.test).push_back(s);
  }
  d.norm_stats = compute_norm_stats(d);
  return d;
}

}  // namespace

TEST_CASE("auc on small hand cases") {
  const std::vector<double> perfect{0.1, 0.2, 0.8, 0.9};
  const std::vector<int> y{0, 0, 1, 1};
  CHECK(auc(perfect, y) == 1.0);
  const std::vector<double> reversed{0.9, 0.8, 0.2, 0.1};
  CHECK(auc(reversed, y) == 0.0);
  const std::vector<double> tied{0.5, 0.5, 0.5, 0.5};
  CHECK(auc(tied, y) == 0.5);
  const std::vector<double> mixed{0.1, 0.4, 0.35, 0.8};
  CHECK(auc(mixed, y) == 0.75);
  const std::vector<int> one_class{1, 1, 1, 1};
  CHECK_THROWS(auc(perfect, one_class));
  const std::vector<int> short_labels{0, 1};
  CHECK_THROWS(auc(perfect, short_labels));
}

TEST_CASE("auc equals the pairwise count and ignores monotone transforms") {
  Rng rng(17);
  std::vector<double> s;
  std::vector<int> y;
  for (int trial = 0; trial < 300; ++trial) {
    random_scores(rng, 2 + rng.index(99), s, y);
    const double a = auc(s, y);
    CHECK(a == pairwise_auc(s, y));
    std::vector<double> moved;
    for (double v : s) moved.push_back(3.0 * v + 1.0);
    CHECK(auc(moved, y) == a);
    std::vector<double> flipped;
    for (double v : s) flipped.push_back(-v);
    CHECK(auc(flipped, y) == doctest::Approx(1.0 - a).epsilon(1e-12));
  }
}

TEST_CASE("multiclass auc averages one-vs-rest") {
  Matrix p(6, 3);
  p << 0.8, 0.1, 0.1, 0.7, 0.2, 0.1, 0.1, 0.8, 0.1, 0.2, 0.7, 0.1, 0.1, 0.1, 0.8, 0.1, 0.2, 0.7;
  const std::vector<Index> y{0, 0, 1, 1, 2, 2};
  CHECK(auc_multiclass(p, y) == 1.0);

  Matrix binary(4, 2);
  binary << 0.9, 0.1, 0.6, 0.4, 0.3, 0.7, 0.65, 0.35;
  const std::vector<Index> yb{0, 0, 1, 1};
  const std::vector<double> scores{0.1, 0.4, 0.7, 0.35};
  const std::vector<int> yi{0, 0, 1, 1};
  CHECK(auc_multiclass(binary, yb) == auc(scores, yi));

  const std::vector<Index> two_present{0, 0, 1, 1, 1, 0};
  const double expected =
      0.5 * (auc(std::vector<double>{0.8, 0.7, 0.1, 0.2, 0.1, 0.1}, std::vector<int>{1, 1, 0, 0, 0, 1}) +
             auc(std::vector<double>{0.1, 0.2, 0.8, 0.7, 0.1, 0.2}, std::vector<int>{0, 0, 1, 1, 1, 0}));
  CHECK(auc_multiclass(p, two_present) == doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("mse and summaries") {
  const std::vector<double> pred{0.1, 0.5};
  const std::vector<double> truth{0.5, 0.5};
  CHECK(mse(pred, truth) == doctest::Approx(0.08));
  CHECK_THROWS(mse(pred, std::vector<double>{1.0}));

  const std::vector<double> v{1.0, 2.0, 3.0};
  const auto s = mean_std(v);
  CHECK(s.mean == 2.0);
  CHECK(s.std == doctest::Approx(std::sqrt(2.0 / 3.0)));
  CHECK(s.count == 3);
  CHECK(format_fixed(s) == "2.00 ± 0.82");
  CHECK(format_fixed(mean_std(std::vector<double>{86.1})) == "86.10");
  CHECK(format_scientific(mean_std(std::vector<double>{0.034, 0.034})) == "3.40e-02 ± 0.00e+00");
}

TEST_CASE("logistic baseline") {
  const auto meta = numeric_metadata(2);
  Rng rng(5);
  SUBCASE("separable data") {
    Matrix x(240, 2);
    std::vector<double> y;
    for (Index i = 0; i < 240; ++i) {
      const int c = static_cast<int>(i % 2);
      x(i, 0) = (c == 1 ? 3.0 : -3.0) + rng.normal();
      x(i, 1) = rng.normal();
      y.push_back(c);
    }
    const auto d = in_memory(meta, x, y, 40);
    CHECK(logistic_baseline(d, d.labeled, d.test) >= 0.95);
  }
  SUBCASE("labels unrelated to features") {
    Matrix x(2040, 2);
    std::vector<double> y;
    for (Index i = 0; i < 2040; ++i) {
      x(i, 0) = rng.normal();
      x(i, 1) = rng.normal();
      y.push_back(static_cast<double>(i % 2));
    }
    const auto d = in_memory(meta, x, y, 40);
    CHECK(std::abs(logistic_baseline(d, d.labeled, d.test) - 0.5) <= 0.1);
  }
  SUBCASE("duplicating the training rows leaves the fit unchanged") {
    Matrix x(80, 2);
    std::vector<Index> y;
    for (Index i = 0; i < 80; ++i) {
      x(i, 0) = rng.normal() + (i % 2 == 0 ? 1.0 : -1.0);
      x(i, 1) = rng.normal();
      y.push_back(i % 2);
    }
    Matrix twice(160, 2);
    twice << x, x;
    std::vector<Index> y2 = y;
    y2.insert(y2.end(), y.begin(), y.end());
    const auto a = fit_logistic(x, y, 2);
    const auto b = fit_logistic(twice, y2, 2);
    CHECK((a.weights - b.weights).cwiseAbs().maxCoeff() < 1e-9);
    const Matrix p = a.predict_proba(x);
    for (Index i = 0; i < p.rows(); ++i) CHECK(p.row(i).sum() == doctest::Approx(1.0));
  }
}

TEST_CASE("ridge recovers a noiseless linear target") {
  Rng rng(9);
  const Matrix x = latte::testing::random_matrix(30, 3, rng);
  Vector w(3);
  w << 1.5, -2.0, 0.25;
  const Vector y = (x * w).array() + 3.0;
  const std::vector<double> targets(y.data(), y.data() + y.size());
  const auto m = fit_ridge(x, targets, 1e-10);
  CHECK((m.weights - w).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(m.bias == doctest::Approx(3.0));
  CHECK((m.predict(x) - y).cwiseAbs().maxCoeff() < 1e-6);
  const auto shrunk = fit_ridge(x, targets, 100.0);
  CHECK(shrunk.weights.norm() < m.weights.norm());
}

TEST_CASE("raw results round-trip and aggregate rendering") {
  std::vector<MetricResult> rows{
      {"heart", "full", 4, 0, "auc", 0.8, ""},
      {"heart", "full", 4, 1, "auc", 0.9, ""},
      {"heart", "full", 4, 2, "auc", std::nan(""), "bad cell, with comma"},
      {"abalone", "full", 4, 0, "mse", 0.034, ""},
  };
  const auto parsed = parse_raw_results(render_raw_results(rows));
  REQUIRE(parsed.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(parsed[i].dataset == rows[i].dataset);
    CHECK(parsed[i].shot == rows[i].shot);
    CHECK(parsed[i].seed == rows[i].seed);
    CHECK(parsed[i].error == rows[i].error);
    if (std::isnan(rows[i].value))
      CHECK(std::isnan(parsed[i].value));
    else
      CHECK(parsed[i].value == rows[i].value);
  }
  CHECK_THROWS_AS(parse_raw_results("nope\n"), FormatError);
  CHECK_THROWS_AS(parse_raw_results("dataset,variant,shot,seed,metric,value,error\na,b\n"), FormatError);

  const auto refs = parse_references(nlohmann::json{{"heart", {{"4", "86.10 ± 5.42"}}}});
  const auto table = render_aggregate(rows, refs);
  CHECK(table.find("| heart | full | auc | 85.00 ± 5.00 [1 failed] | 86.10 ± 5.42 |") != std::string::npos);
  CHECK(table.find("reference shot 4") != std::string::npos);
  CHECK(table.find("| abalone | full | mse | 3.40e-02 |") != std::string::npos);
  CHECK_THROWS_AS(parse_references(nlohmann::json{{"heart", {{"four", "1"}}}}), ConfigError);

  TempDir dir;
  const auto paths = default_report_paths(dir.path());
  emit_report({rows, {1, 0, 0}}, paths, refs);
  CHECK(read_raw_results(paths.raw).size() == rows.size());
  const auto summary = nlohmann::json::parse(read_file(paths.summary));
  CHECK(summary["llm_call_summary"]["preprocessing"] == 1);
  CHECK(summary["failed_cells"] == 1);
  const auto before = read_file(paths.aggregate);
  std::filesystem::remove(paths.aggregate);
  regenerate_aggregate(paths, refs);
  CHECK(read_file(paths.aggregate) == before);
  CHECK_THROWS_AS(read_raw_results(dir / "missing.csv"), MissingArtifactError);
}

TEST_CASE("variant names") {
  CHECK(Variant{}.name() == "full");
  CHECK(Variant::parse("full") == Variant{});
  CHECK(Variant::parse("no-llm+no-meta") == Variant{true, false, false});
  CHECK(Variant::parse("no-sate,meta-off") == Variant{false, true, false});
  for (int mask = 0; mask < 8; ++mask) {
    const Variant v{(mask & 1) != 0, (mask & 2) != 0, (mask & 4) != 0};
    CHECK(Variant::parse(v.name()) == v);
  }
  CHECK_THROWS_AS(Variant::parse("no-magic"), ConfigError);
}

TEST_CASE("experiment sweep covers every cell without language model calls") {
  TempDir dir;
  const auto dataset = latte::testing::small_blob_dataset(dir);
  const auto knowledge = latte::testing::small_knowledge(dataset.metadata);
  ExperimentConfig cfg;
  cfg.dataset_name = "blobs";
  cfg.embedding.dim = 6;
  cfg.settings = latte::testing::small_settings();
  cfg.shots = {4};
  cfg.seeds = {0, 1};
  cfg.variants = {Variant{}, Variant::parse("no-llm+no-meta")};
  cfg.baseline = true;
  cfg.artifact_dir = dir / "artifacts";
  std::filesystem::create_directories(*cfg.artifact_dir);
  LlmCallCounter counter;
  const auto report = run_experiment(dataset, knowledge, cfg, counter);
  REQUIRE(report.results.size() == 6);
  for (const auto& r : report.results) {
    CHECK(r.error.empty());
    CHECK(r.metric == "auc");
    CHECK(r.value >= 0.0);
    CHECK(r.value <= 1.0);
  }
  CHECK(report.results[4].variant == "logreg");
  CHECK(report.llm_calls == LlmCallSummary{});
  CHECK(counter.snapshot().total() == 0);
  CHECK(std::filesystem::exists(dir / "artifacts/loss_blobs_full_seed0.csv"));

  const auto again = run_experiment(dataset, knowledge, cfg, counter);
  CHECK(render_raw_results(again.results) == render_raw_results(report.results));
}
