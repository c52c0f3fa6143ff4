#include <doctest.h>

#include <cmath>
#include <functional>

#include "latte/error.hpp"
#include "latte/nn/autograd.hpp"
#include "latte/nn/checkpoint.hpp"
#include "latte/nn/grad_check.hpp"
#include "latte/nn/layers.hpp"
#include "latte/nn/parameters.hpp"
#include "support.hpp"

using namespace latte;
using namespace latte::nn;
using latte::testing::random_matrix;
using latte::testing::random_vector;
using latte::testing::TempDir;

namespace {

/// Gradient check of sum(op(params) .* weights) for a random weight matrix.
double op_error(ParameterStore& store, const std::function<Var(Tape&)>& op, std::uint64_t seed = 1) {
  Matrix weights;
  auto loss = [&](bool grad) {
    Tape tape;
    Var out = op(tape);
    if (weights.size() == 0) {
      Rng rng(seed);
      weights = random_matrix(out.rows(), out.cols(), rng);
    }
    Var l = sum(mul(out, tape.constant(weights)));
    if (grad) tape.backward(l);
    return l.value()(0, 0);
  };
  return grad_check(loss, store).max_relative_error;
}

}  // namespace

TEST_CASE("scaled attention on hand-sized inputs") {
  SUBCASE("single key returns that value") {
    Matrix q(1, 2), k(1, 2), v(1, 3);
    q << 3, -1;
    k << 0.5, 2;
    v << 7, 8, 9;
    const auto r = scaled_attention(q, k, v);
    CHECK(r.weights(0, 0) == 1.0);
    CHECK(r.outputs == v);
  }
  SUBCASE("query orthogonal to both keys splits evenly") {
    Matrix q(1, 2), k(2, 2), v(2, 1);
    q << 1, 0;
    k << 0, 1, 0, -1;
    v << 2, 4;
    const auto r = scaled_attention(q, k, v);
    CHECK(r.weights(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r.outputs(0, 0) == doctest::Approx(3.0).epsilon(1e-12));
  }
  SUBCASE("three keys against a hand softmax") {
    Matrix q(1, 2), k(3, 2), v(3, 2);
    q << 1, 2;
    k << 1, 0, 0, 1, 2, 2;
    v << 1, 0, 0, 1, 1, 1;
    const double s[] = {1 / std::sqrt(2.0), 2 / std::sqrt(2.0), 6 / std::sqrt(2.0)};
    const double z = std::exp(s[0]) + std::exp(s[1]) + std::exp(s[2]);
    const auto r = scaled_attention(q, k, v);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(r.weights(0, i) - std::exp(s[i]) / z) < 1e-9);
  }
  SUBCASE("width mismatch") {
    CHECK_THROWS_AS(scaled_attention(Matrix::Ones(1, 2), Matrix::Ones(2, 3), Matrix::Ones(2, 3)), ShapeError);
  }
}

TEST_CASE("attention output is invariant to key order and weights permute along") {
  Rng rng(4);
  const Matrix q = random_matrix(2, 4, rng);
  const Matrix k = random_matrix(5, 4, rng);
  const Matrix v = random_matrix(5, 3, rng);
  const std::vector<Index> perm{3, 0, 4, 1, 2};
  Matrix kp(5, 4), vp(5, 3);
  for (Index i = 0; i < 5; ++i) {
    kp.row(i) = k.row(perm[static_cast<std::size_t>(i)]);
    vp.row(i) = v.row(perm[static_cast<std::size_t>(i)]);
  }
  const auto a = scaled_attention(q, k, v);
  const auto b = scaled_attention(q, kp, vp);
  CHECK((a.outputs - b.outputs).cwiseAbs().maxCoeff() < 1e-12);
  for (Index i = 0; i < 5; ++i)
    CHECK(std::abs(b.weights(0, i) - a.weights(0, perm[static_cast<std::size_t>(i)])) < 1e-15);
}

TEST_CASE("kl divergence") {
  Vector p(2), q(2);
  SUBCASE("identical logits") {
    p << 0.3, -2;
    CHECK(kl_divergence(p, p, 0.7) == doctest::Approx(0.0));
  }
  SUBCASE("two-point closed form") {
    p << 1, 0;
    q << 0, 1;
    const double a = std::exp(1.0) / (std::exp(1.0) + 1.0);
    const double oracle = a * std::log(a / (1 - a)) + (1 - a) * std::log((1 - a) / a);
    CHECK(std::abs(kl_divergence(p, q, 1.0) - oracle) < 1e-9);
  }
  SUBCASE("diverging distributions") {
    p << 0, 0;
    q << 30, -30;
    CHECK(kl_divergence(p, q, 1.0) > 20.0);
  }
  SUBCASE("non-positive temperature") {
    p << 0, 0;
    CHECK_THROWS_AS(kl_divergence(p, p, 0.0), DomainError);
  }
}

TEST_CASE("kl is non-negative over random logit pairs") {
  Rng rng(8);
  for (int t = 0; t < 200; ++t) {
    const auto p = random_vector(6, rng, 3.0);
    const auto q = random_vector(6, rng, 3.0);
    CHECK(kl_divergence(p, q, 0.5 + rng.uniform() * 4) >= 0.0);
  }
}

TEST_CASE("softmax rows are stochastic and shift invariant") {
  Rng rng(2);
  const Matrix logits = random_matrix(20, 7, rng, 30.0);
  const Matrix s = softmax(logits);
  CHECK(s.minCoeff() >= 0.0);
  for (Index i = 0; i < s.rows(); ++i) CHECK(std::abs(s.row(i).sum() - 1.0) < 1e-9);
  const Matrix shifted = softmax((logits.array() + 1000.0).matrix());
  CHECK((shifted - s).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("grad_check harness") {
  Vector w(3);
  w << 1, 2, 3;
  auto f = [](const Vector& x) { return x.squaredNorm(); };
  CHECK(grad_check(f, 2.0 * w, w).max_relative_error < 1e-8);
  Vector corrupted = 2.0 * w;
  corrupted[1] *= 2.0;
  CHECK(grad_check(f, corrupted, w).max_relative_error > 0.1);
  auto nan = [](const Vector&) { return std::nan(""); };
  CHECK_THROWS_AS(grad_check(nan, w, w), NumericalError);
}

TEST_CASE("initialization schemes") {
  Rng rng(1);
  CHECK(init_parameters(2, 2, InitScheme::zeros, rng).isZero(0.0));
  CHECK(init_parameters(3, 3, InitScheme::identity, rng).isIdentity(0.0));
  const Matrix k = init_parameters(128, 10000 / 128 + 1, InitScheme::kaiming, rng);
  const double var = (k.array() - k.mean()).square().mean();
  CHECK(std::abs(var - 2.0 / 128.0) < 0.1 * 2.0 / 128.0);
  Rng a(5), b(5);
  CHECK(init_parameters(4, 4, InitScheme::kaiming, a) == init_parameters(4, 4, InitScheme::kaiming, b));
  CHECK_THROWS_AS(parse_init_scheme("orthogonal"), ConfigError);
  CHECK(parse_init_scheme("xavier") == InitScheme::xavier);
}

TEST_CASE("parameter store names are unique and finite") {
  ParameterStore store;
  Rng rng(0);
  store.add("a", 2, 2, InitScheme::kaiming, rng);
  CHECK_THROWS_AS(store.add("a", 1, 1, InitScheme::zeros, rng), ContractViolation);
  CHECK(store.all_finite());
  CHECK(store.scalar_count() == 4);
  CHECK_THROWS_AS(store.get("b"), ContractViolation);
}

TEST_CASE("every differentiable op passes the gradient check") {
  ParameterStore store;
  Rng rng(11);
  auto& a = store.add("a", 4, 6, InitScheme::normal, rng);
  auto& b = store.add("b", 6, 3, InitScheme::normal, rng);
  auto& c = store.add("c", 4, 6, InitScheme::normal, rng);
  auto& row = store.add("row", 1, 6, InitScheme::normal, rng);
  auto& gain = store.add("gain", 1, 6, InitScheme::normal, rng);
  auto P = [](Tape& t, Parameter& p) { return t.parameter(p); };

  CHECK(op_error(store, [&](Tape& t) { return matmul(P(t, a), P(t, b)); }) < 1e-6);
  CHECK(op_error(store, [&](Tape& t) { return add(P(t, a), P(t, c)); }) < 1e-6);
  CHECK(op_error(store, [&](Tape& t) { return sub(P(t, a), P(t, c)); }) < 1e-6);
  CHECK(op_error(store, [&](Tape& t) { return add_row(P(t, a), P(t, row)); }) < 1e-6);
  CHECK(op_error(store, [&](Tape& t) { return scale(P(t, a), -1.7); }) < 1e-6);
  CHECK(op_error(store, [&](Tape& t) { return mul(P(t, a), P(t, c)); }) < 1e-6);
  CHECK(op_error(store, [&](Tape& t) { return gelu(P(t, a)); }) < 1e-6);
  CHECK(op_error(store, [&](Tape& t) { return layer_norm(P(t, a), P(t, gain), P(t, row)); }) < 1e-5);
  CHECK(op_error(store, [&](Tape& t) { return log_softmax_rows(P(t, a)); }) < 1e-6);
  CHECK(op_error(store, [&](Tape& t) { return softmax_rows(P(t, a)); }) < 1e-6);
  CHECK(op_error(store, [&](Tape& t) { return gather_rows(P(t, a), {3, 0, 3, 1}); }) < 1e-6);
  CHECK(op_error(store, [&](Tape& t) { return concat_rows({P(t, a), P(t, c), P(t, row)}); }) < 1e-6);
  CHECK(op_error(store, [&](Tape& t) { return mean(P(t, a)); }) < 1e-6);
  CHECK(op_error(store, [&](Tape& t) { return kl_rows(P(t, a), P(t, c), 2.5); }) < 1e-6);
  CHECK(op_error(store, [&](Tape& t) { return nll_rows(P(t, a), {0, 5, 2, 2}); }) < 1e-6);
  CHECK(op_error(store, [&](Tape& t) { return squared_error_rows(P(t, a), Matrix::Ones(4, 6)); }) < 1e-6);
  CHECK(op_error(store, [&](Tape& t) {
          return attention(P(t, a), P(t, c), mul(P(t, c), P(t, a)), {{0, 2, 0, 3}, {2, 2, 1, 3}}, 2).output;
        }) < 1e-5);
}

TEST_CASE("kl_rows matches the scalar kl divergence and vanishes at equality") {
  Rng rng(3);
  const Matrix p = random_matrix(3, 5, rng);
  const Matrix q = random_matrix(3, 5, rng);
  Tape tape;
  const Matrix rows = kl_rows(tape.constant(p), tape.constant(q), 1.5).value();
  for (Index i = 0; i < 3; ++i)
    CHECK(std::abs(rows(i, 0) - kl_divergence(p.row(i).transpose(), q.row(i).transpose(), 1.5)) < 1e-12);
  CHECK(kl_rows(tape.constant(p), tape.constant(p), 1.5).value().cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("dropout is the identity at rate zero and in eval contexts") {
  Rng rng(1);
  Tape tape;
  const Matrix x = random_matrix(3, 4, rng);
  CHECK(dropout(tape.constant(x), 0.0, rng).value() == x);
  ForwardContext eval;
  CHECK(eval.drop(tape.constant(x)).value() == x);
  const Matrix dropped = dropout(tape.constant(Matrix::Ones(100, 100)), 0.5, rng).value();
  const double zeros = static_cast<double>((dropped.array() == 0.0).count()) / 1e4;
  CHECK(std::abs(zeros - 0.5) < 0.03);
  CHECK(dropped.maxCoeff() == 2.0);
}

TEST_CASE("transformer and cross-attention blocks pass the gradient check") {
  ParameterStore store;
  Rng rng(6);
  TransformerBlock block(store, "enc", 8, 12, 2, rng);
  CrossAttentionBlock cross(store, "cross", 8, 12, 2, rng);
  MlpHead head(store, "head", 8, 6, 3, rng);
  for (auto* p : store.parameters()) p->value = random_matrix(p->value.rows(), p->value.cols(), rng, 0.5);
  const Matrix tokens = random_matrix(6, 8, rng);
  const std::vector<AttentionSegment> self{{0, 3, 0, 3}, {3, 3, 3, 3}};
  const std::vector<AttentionSegment> to_features{{0, 1, 1, 2}, {1, 1, 4, 2}};
  auto loss = [&](bool grad) {
    Tape tape;
    Var h = block(tape.constant(tokens), self, {});
    Var q = cross(gather_rows(h, {0, 3}), h, to_features, {});
    Var l = mean(nll_rows(head(q), {2, 0}));
    if (grad) tape.backward(l);
    return l.value()(0, 0);
  };
  CHECK(grad_check(loss, store).max_relative_error < 1e-4);
}

TEST_CASE("Adam moves parameters against the gradient") {
  ParameterStore store;
  Rng rng(0);
  auto& w = store.add("w", 1, 3, InitScheme::zeros, rng);
  w.value << 1, -2, 3;
  Adam opt({0.1});
  for (int i = 0; i < 200; ++i) {
    Tape tape;
    Var l = sum(mul(tape.parameter(w), tape.parameter(w)));
    store.zero_grad();
    tape.backward(l);
    opt.step(store);
  }
  CHECK(w.value.cwiseAbs().maxCoeff() < 0.05);
  CHECK(opt.steps() == 200);
}

TEST_CASE("checkpoints round-trip byte for byte") {
  TempDir dir;
  Rng rng(2);
  ParameterStore store;
  store.add("sate.w", 3, 4, InitScheme::kaiming, rng);
  store.add("adapter.b", 1, 4, InitScheme::normal, rng);
  Checkpoint ckpt;
  ckpt.manifest = {{"seed", 7}, {"config_hash", "abc"}};
  store_parameters(ckpt, store);
  ckpt.save(dir / "a.ckpt");
  const auto loaded = Checkpoint::load(dir / "a.ckpt");
  loaded.save(dir / "b.ckpt");
  CHECK(read_file(dir / "a.ckpt") == read_file(dir / "b.ckpt"));
  CHECK(loaded.manifest == ckpt.manifest);

  ParameterStore other;
  Rng rng2(99);
  other.add("sate.w", 3, 4, InitScheme::zeros, rng2);
  other.add("adapter.b", 1, 4, InitScheme::zeros, rng2);
  restore_parameters(loaded, other, "sate.");
  CHECK(other.get("sate.w").value == store.get("sate.w").value);
  CHECK(other.get("adapter.b").value.isZero(0.0));

  CHECK_THROWS_AS(Checkpoint::deserialize("garbage"), FormatError);
  CHECK_THROWS_AS(Checkpoint::load(dir / "missing.ckpt"), MissingArtifactError);
  const auto bytes = read_file(dir / "a.ckpt");
  CHECK_THROWS_AS(Checkpoint::deserialize(bytes.substr(0, bytes.size() - 3)), FormatError);
}
