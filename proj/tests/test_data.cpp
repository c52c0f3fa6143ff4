#include <doctest.h>

#include <cmath>
#include <set>

#include "latte/data.hpp"
#include "latte/error.hpp"
#include "support.hpp"

using namespace latte;
using latte::testing::TempDir;

namespace {

void write_metadata(const std::filesystem::path& path, const nlohmann::json& j) { write_file_atomic(path, j.dump()); }

nlohmann::json three_feature_metadata() {
  return {{"task_description", "Predict heart disease"},
          {"task_type", "classification"},
          {"label_column", "target"},
          {"class_names", {"healthy", "sick"}},
          {"features",
           {{{"name", "age"}, {"description", "age in years"}, {"kind", "numerical"}},
            {{"name", "sex"}, {"description", "biological sex"}, {"kind", "categorical"}},
            {{"name", "chol"}, {"description", "serum cholesterol"}, {"kind", "numerical"}}}}};
}

}  // namespace

TEST_CASE("load_dataset parses a fully labeled four-column file") {
  TempDir dir;
  std::string csv = "age,sex,chol,target\n";
  for (int i = 0; i < 10; ++i)
    csv += std::to_string(40 + i) + "," + (i % 2 ? "Male" : "Female") + "," + std::to_string(200 + 3 * i) + "," +
           std::to_string(i % 2) + "\n";
  write_file_atomic(dir / "heart.csv", csv);
  write_metadata(dir / "heart.json", three_feature_metadata());
  const auto ds = load_dataset(dir / "heart.csv", dir / "heart.json");
  CHECK(ds.labeled.size() == 10);
  CHECK(ds.unlabeled.empty());
  CHECK(ds.metadata.features.size() == 3);
  CHECK(std::get<std::string>(ds.labeled[1].value(ds.metadata, "sex")) == "Male");
  CHECK(std::get<double>(ds.labeled[2].value(ds.metadata, "chol")) == 206.0);
  CHECK(ds.labeled[3].class_index() == 1);
}

TEST_CASE("rows with an empty label become unlabeled and no sample is lost") {
  TempDir dir;
  write_file_atomic(dir / "d.csv", "age,sex,chol,target\n1,a,2,0\n3,b,4,\n5,a,6,sick\n7,b,8,\n9,a,1,healthy\n");
  write_metadata(dir / "d.json", three_feature_metadata());
  const auto ds = load_dataset(dir / "d.csv", dir / "d.json");
  CHECK(ds.labeled.size() == 3);
  CHECK(ds.unlabeled.size() == 2);
  CHECK(ds.labeled[1].class_index() == 1);
  CHECK(ds.labeled[2].class_index() == 0);
}

TEST_CASE("schema problems are reported") {
  TempDir dir;
  write_metadata(dir / "d.json", three_feature_metadata());

  SUBCASE("column missing from the file") {
    write_file_atomic(dir / "d.csv", "age,sex,target\n1,a,0\n");
    CHECK_THROWS_WITH_AS(load_dataset(dir / "d.csv", dir / "d.json"), doctest::Contains("chol"), SchemaError);
  }
  SUBCASE("unparsable numerical cell names the row") {
    write_file_atomic(dir / "d.csv", "age,sex,chol,target\n1,a,2,0\nold,b,4,1\n");
    CHECK_THROWS_WITH_AS(load_dataset(dir / "d.csv", dir / "d.json"), doctest::Contains("row"), ParseError);
  }
  SUBCASE("duplicate feature names") {
    auto j = three_feature_metadata();
    j["features"][2]["name"] = "age";
    write_metadata(dir / "dup.json", j);
    write_file_atomic(dir / "d.csv", "age,sex,chol,target\n1,a,2,0\n");
    CHECK_THROWS_AS(load_dataset(dir / "d.csv", dir / "dup.json"), SchemaError);
  }
}

TEST_CASE("Heart-style metadata with 4 categorical and 7 numerical features") {
  Metadata m;
  m.task_description = "Predict heart disease";
  for (const char* n : {"Sex", "ChestPainType", "RestingECG", "ST_Slope"})
    m.features.push_back({n, "", FeatureKind::categorical});
  for (const char* n : {"Age", "RestingBP", "Cholesterol", "FastingBS", "MaxHR", "ExerciseAngina", "Oldpeak"})
    m.features.push_back({n, "", FeatureKind::numerical});
  m.class_names = {"no", "yes"};
  m.label_column = "HeartDisease";
  nlohmann::json j = m;
  const auto back = j.get<Metadata>();
  CHECK(back.features.size() == 11);
  CHECK(back == m);
}

TEST_CASE("norm stats use population std and handle constants") {
  TabularDataset ds;
  ds.metadata = latte::testing::numeric_metadata(2, TaskType::regression);
  const double a[] = {1, 2, 3};
  const double y[] = {10, 20, 40};
  for (int i = 0; i < 3; ++i) ds.labeled.push_back({{a[i], 5.0}, y[i]});
  ds.norm_stats = compute_norm_stats(ds);
  CHECK(ds.norm_stats.numeric.at("f0").mean == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(ds.norm_stats.numeric.at("f0").std == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-15));
  CHECK(ds.norm_stats.numeric.at("f1").std == 0.0);
  CHECK(ds.norm_stats.normalize_value("f1", 5.0) == 0.0);
  CHECK(ds.norm_stats.target->min == 10.0);
  CHECK(ds.norm_stats.target->max == 40.0);
  CHECK(ds.norm_stats.normalize_target(20.0) == doctest::Approx(1.0 / 3.0));
  CHECK(ds.norm_stats.denormalize_target(0.5) == doctest::Approx(25.0));
  CHECK(ds.norm_stats.normalize_value("f0", std::nan("")) == 0.0);
}

TEST_CASE("normalized features have zero mean and unit std over labeled and unlabeled rows") {
  Rng rng(3);
  TabularDataset ds;
  ds.metadata = latte::testing::numeric_metadata(3);
  for (int i = 0; i < 50; ++i) {
    Sample s{{3.0 + 2.0 * rng.normal(), -1.0 + 0.1 * rng.normal(), 100.0 * rng.uniform()}, std::nullopt};
    if (i < 20) s.label = static_cast<double>(i % 2);
    (i < 20 ? ds.labeled : ds.unlabeled).push_back(s);
  }
  ds.norm_stats = compute_norm_stats(ds);
  for (const auto& f : ds.metadata.features) {
    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (const auto* pool : {&ds.labeled, &ds.unlabeled})
      for (const auto& s : *pool) {
        const double z = ds.norm_stats.normalize_value(f.name, std::get<double>(s.value(ds.metadata, f.name)));
        sum += z;
        sq += z * z;
        ++n;
      }
    const double mean = sum / static_cast<double>(n);
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(std::sqrt(sq / static_cast<double>(n) - mean * mean) - 1.0) < 1e-9);
  }
}

TEST_CASE("regression targets of training rows normalize into [0, 1]") {
  Rng rng(5);
  TabularDataset ds;
  ds.metadata = latte::testing::numeric_metadata(1, TaskType::regression);
  for (int i = 0; i < 30; ++i) ds.labeled.push_back({{rng.normal()}, 50.0 * rng.normal()});
  ds.norm_stats = compute_norm_stats(ds);
  for (const auto& s : ds.labeled) {
    const double t = ds.norm_stats.normalize_target(*s.label);
    CHECK(t >= 0.0);
    CHECK(t <= 1.0);
  }
}

namespace {

TabularDataset binary_dataset(int per_class) {
  TabularDataset ds;
  ds.metadata = latte::testing::numeric_metadata(1);
  for (int i = 0; i < 2 * per_class; ++i) ds.labeled.push_back({{static_cast<double>(i)}, static_cast<double>(i % 2)});
  ds.norm_stats = compute_norm_stats(ds);
  return ds;
}

}  // namespace

TEST_CASE("few-shot sampling is stratified, unique and deterministic") {
  const auto ds = binary_dataset(20);
  const auto split = sample_few_shot(ds, 4, 0);
  REQUIRE(split.labeled_indices.size() == 8);
  int per_class[2] = {0, 0};
  for (auto i : split.labeled_indices) ++per_class[ds.labeled[i].class_index()];
  CHECK(per_class[0] == 4);
  CHECK(per_class[1] == 4);
  CHECK(std::set<std::size_t>(split.labeled_indices.begin(), split.labeled_indices.end()).size() == 8);
  CHECK(sample_few_shot(ds, 4, 7).labeled_indices == sample_few_shot(ds, 4, 7).labeled_indices);
  CHECK(sample_few_shot(ds, 4, 7).labeled_indices != sample_few_shot(ds, 4, 8).labeled_indices);
}

TEST_CASE("few-shot sampling edge cases") {
  SUBCASE("one sample per class gives that pair") {
    const auto ds = binary_dataset(1);
    auto idx = sample_few_shot(ds, 1, 3).labeled_indices;
    std::sort(idx.begin(), idx.end());
    CHECK(idx == std::vector<std::size_t>{0, 1});
  }
  SUBCASE("exhausted class warns and takes what exists") {
    const auto ds = binary_dataset(3);
    const auto split = sample_few_shot(ds, 5, 0);
    CHECK(split.labeled_indices.size() == 6);
    CHECK(split.warnings.size() == 2);
  }
  SUBCASE("regression draws shot samples in total") {
    TabularDataset ds;
    ds.metadata = latte::testing::numeric_metadata(1, TaskType::regression);
    for (int i = 0; i < 30; ++i) ds.labeled.push_back({{1.0 * i}, 1.0 * i});
    ds.norm_stats = compute_norm_stats(ds);
    CHECK(sample_few_shot(ds, 16, 2).labeled_indices.size() == 16);
  }
}

TEST_CASE("hold_out_test moves a stratified fraction into the test split") {
  auto ds = binary_dataset(10);
  hold_out_test(ds, 0.3, 1);
  CHECK(ds.test.size() == 6);
  CHECK(ds.labeled.size() == 14);
  int pos = 0;
  for (const auto& s : ds.test) pos += static_cast<int>(s.class_index());
  CHECK(pos == 3);
}

TEST_CASE("quoted fields keep their delimiters") {
  const auto cells = split_delimited_line(R"(a,"b,c",d)", ',');
  CHECK(cells == std::vector<std::string>{"a", "b,c", "d"});
}
