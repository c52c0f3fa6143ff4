#include <doctest.h>

#include "latte/encoder.hpp"
#include "latte/error.hpp"
#include "latte/nn/grad_check.hpp"
#include "latte/nn/layers.hpp"
#include "support.hpp"

using namespace latte;
using latte::testing::random_matrix;
using latte::testing::random_vector;

namespace {

EncoderConfig small_config() {
  EncoderConfig c;
  c.model_dim = 16;
  c.ffn_dim = 24;
  c.heads = 4;
  return c;
}

std::vector<std::pair<std::string, Vector>> random_row(int n, Index dim, Rng& rng) {
  std::vector<std::pair<std::string, Vector>> row;
  for (int j = 0; j < n; ++j) row.emplace_back("f" + std::to_string(j), random_vector(dim, rng));
  return row;
}

double max_diff(const Vector& a, const Vector& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("encoder config validation") {
  EncoderConfig c;
  CHECK_NOTHROW(c.validate());
  c.heads = 5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = EncoderConfig{};
  c.layers = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(EncoderConfig{}.model_dim == 128);
  CHECK(EncoderConfig{}.ffn_dim == 256);
  CHECK(EncoderConfig{}.heads == 8);
  CHECK(EncoderConfig{}.layers == 2);
  CHECK(EncoderConfig{}.dropout == 0.1);
}

TEST_CASE("single feature row has the expected shape") {
  nn::ParameterStore store;
  Rng rng(1);
  TabularEncoder enc(store, small_config(), 6, rng);
  const auto out = encode_row(enc, random_row(1, 6, rng));
  CHECK(out.h_cls.size() == 16);
  REQUIRE(out.h_features.size() == 1);
  CHECK(out.h_cls.allFinite());
  CHECK(out.h_features[0].allFinite());
  CHECK(out.feature_order == std::vector<std::string>{"f0"});
  CHECK_THROWS_AS(encode_row(enc, {{"a", Vector::Ones(6)}, {"b", Vector::Ones(5)}}), ShapeError);
  CHECK_THROWS_AS(encode_row(enc, {}), ContractViolation);
}

TEST_CASE("swapping two features permutes the outputs") {
  nn::ParameterStore store;
  Rng rng(2);
  TabularEncoder enc(store, small_config(), 6, rng);
  auto row = random_row(2, 6, rng);
  const auto ab = encode_row(enc, row);
  std::swap(row[0], row[1]);
  const auto ba = encode_row(enc, row);
  CHECK(max_diff(ab.h_cls, ba.h_cls) < 1e-9);
  CHECK(max_diff(ab.h_features[0], ba.h_features[1]) < 1e-9);
  CHECK(max_diff(ab.h_features[1], ba.h_features[0]) < 1e-9);
  CHECK(ba.feature_order == std::vector<std::string>{"f1", "f0"});
}

TEST_CASE("permutation invariance property over random rows and permutations") {
  nn::ParameterStore store;
  Rng rng(3);
  TabularEncoder enc(store, small_config(), 8, rng);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(rng.index(7));
    const auto row = random_row(n, 8, rng);
    const auto base = encode_row(enc, row);
    std::vector<std::size_t> perm(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    rng.shuffle(perm);
    std::vector<std::pair<std::string, Vector>> permuted;
    for (auto p : perm) permuted.push_back(row[p]);
    const auto out = encode_row(enc, permuted);
    CHECK(max_diff(out.h_cls, base.h_cls) < 1e-9);
    for (std::size_t i = 0; i < perm.size(); ++i) CHECK(max_diff(out.h_features[i], base.h_features[perm[i]]) < 1e-9);
  }
}

TEST_CASE("batched encoding equals the per-row loop") {
  nn::ParameterStore store;
  Rng rng(4);
  TabularEncoder enc(store, small_config(), 6, rng);
  FeatureBatch batch{random_matrix(5 * 3, 6, rng), 5, 3};
  const std::vector<std::string> order{"a", "b", "c"};
  const auto rows = encode_batch(enc, batch, order);
  REQUIRE(rows.size() == 5);
  for (Index r = 0; r < 5; ++r) {
    std::vector<std::pair<std::string, Vector>> single;
    for (Index j = 0; j < 3; ++j) single.emplace_back(order[static_cast<std::size_t>(j)], batch.inputs.row(r * 3 + j).transpose());
    const auto one = encode_row(enc, single);
    CHECK(max_diff(one.h_cls, rows[static_cast<std::size_t>(r)].h_cls) < 1e-6);
    for (std::size_t j = 0; j < 3; ++j) CHECK(max_diff(one.h_features[j], rows[static_cast<std::size_t>(r)].h_features[j]) < 1e-6);
  }

  const std::array<std::size_t, 1> first{0};
  const auto alone = encode_batch(enc, batch.select(std::span<const std::size_t>(first)), order);
  std::vector<std::pair<std::string, Vector>> single;
  for (Index j = 0; j < 3; ++j) single.emplace_back(order[static_cast<std::size_t>(j)], batch.inputs.row(j).transpose());
  CHECK(alone.front().h_cls == encode_row(enc, single).h_cls);
}

TEST_CASE("identical rows encode identically and eval mode is deterministic") {
  nn::ParameterStore store;
  Rng rng(5);
  TabularEncoder enc(store, small_config(), 6, rng);
  const Matrix one = random_matrix(2, 6, rng);
  FeatureBatch batch{Matrix(6, 6), 3, 2};
  for (int r = 0; r < 3; ++r) batch.inputs.middleRows(2 * r, 2) = one;
  const auto rows = encode_batch(enc, batch, {"x", "y"});
  CHECK(rows[0].h_cls == rows[1].h_cls);
  CHECK(rows[1].h_cls == rows[2].h_cls);
  CHECK(encode_batch(enc, batch, {"x", "y"})[0].h_cls == rows[0].h_cls);
}

TEST_CASE("with a zeroed input projection the CLS output ignores the inputs") {
  nn::ParameterStore store;
  Rng rng(6);
  TabularEncoder enc(store, small_config(), 6, rng);
  store.get("sate.input.weight").value.setZero();
  store.get("sate.input.bias").value.setZero();
  const auto a = encode_row(enc, random_row(3, 6, rng));
  const auto b = encode_row(enc, {{"z0", Vector::Zero(6)}, {"z1", Vector::Zero(6)}, {"z2", Vector::Zero(6)}});
  CHECK(max_diff(a.h_cls, b.h_cls) < 1e-12);
}

TEST_CASE("gradients through a head on the CLS output are correct") {
  nn::ParameterStore store;
  Rng rng(7);
  TabularEncoder enc(store, small_config(), 5, rng);
  nn::MlpHead head(store, "probe", 16, 8, 2, rng);
  for (auto* p : store.parameters())
    if (p->value.isZero(0.0)) p->value = random_matrix(p->value.rows(), p->value.cols(), rng, 0.3);
  FeatureBatch batch{random_matrix(3 * 4, 5, rng), 3, 4};
  auto loss = [&](bool grad) {
    nn::Tape tape;
    auto encoded = enc.forward(tape, batch, {});
    nn::Var l = nn::mean(nn::nll_rows(head(encoded.cls()), {0, 1, 1}));
    if (grad) tape.backward(l);
    return l.value()(0, 0);
  };
  CHECK(nn::grad_check(loss, store).max_relative_error < 1e-4);
}

TEST_CASE("value vocabulary is column blind") {
  TabularDataset ds;
  ds.metadata = latte::testing::numeric_metadata(2);
  ds.metadata.features.push_back({"color", "", FeatureKind::categorical});
  ds.metadata.features.push_back({"shade", "", FeatureKind::categorical});
  ds.labeled.push_back({{1.0, 2.0, std::string("red"), std::string("blue")}, 0.0});
  ds.labeled.push_back({{3.0, 4.0, std::string("blue"), std::string("red")}, 1.0});
  ds.norm_stats = compute_norm_stats(ds);
  const auto vocab = ValueVocabulary::build(ds);
  CHECK(vocab.size() == 4);
  const Matrix d = vocab.design_rows(ds.metadata, ds.norm_stats, ds.labeled);
  CHECK(d.rows() == 8);
  CHECK(d(0, 0) == doctest::Approx(-1.0));
  CHECK(d(1, 0) == doctest::Approx(-1.0));
  CHECK(d.row(2) == d.row(7));
  CHECK(d.row(3) == d.row(6));
  Sample unseen{{0.0, 0.0, std::string("green"), std::string("red")}, 0.0};
  CHECK(vocab.design_rows(ds.metadata, ds.norm_stats, std::span<const Sample>(&unseen, 1))(2, 1) == 1.0);
  CHECK(ValueVocabulary::from_values(vocab.values()).values() == vocab.values());
}
