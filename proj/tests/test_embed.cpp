#include <doctest.h>

#include <thread>

#include "latte/embed.hpp"
#include "latte/error.hpp"
#include "latte/knowledge.hpp"
#include "latte/mock_server.hpp"
#include "support.hpp"

using namespace latte;
using latte::testing::TempDir;

TEST_CASE("stub tokens are unit norm, deterministic and seed dependent") {
  const auto a = stub_embed_tokens("a b a", 8, 0);
  REQUIRE(a.size() == 3);
  CHECK(a[0] == a[2]);
  CHECK(a[0] != a[1]);
  for (const auto& v : a) CHECK(std::abs(v.norm() - 1.0) < 1e-9);
  const auto b = stub_embed_tokens("a", 8, 1);
  CHECK(b[0] != a[0]);
  CHECK(stub_embed_tokens("", 8, 0).size() == 1);
  CHECK(stub_embed_tokens("a b a", 8, 0) == a);
}

TEST_CASE("categorical cells embed the joined name and value text") {
  StubEmbeddingProvider p(16, 3);
  const FeatureDescriptor gender{"Gender", "", FeatureKind::categorical};
  const Vector got = embed_feature_value(p, gender, std::string("Male"), {});
  const auto tokens = stub_embed_tokens("Gender: Male", 16, 3);
  Vector mean = Vector::Zero(16);
  for (const auto& t : tokens) mean += t;
  mean /= static_cast<double>(tokens.size());
  CHECK((got - mean).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(categorical_text("Gender", "Male") == "Gender: Male");
}

TEST_CASE("numerical cells scale the name embedding linearly") {
  StubEmbeddingProvider p(16, 3);
  const FeatureDescriptor age{"age", "", FeatureKind::numerical};
  NormStats stats;
  stats.numeric["age"] = {0.0, 1.0};
  const Vector base = embed_feature_value(p, age, 1.0, stats);
  CHECK(embed_feature_value(p, age, 0.0, stats).isZero(0.0));
  CHECK(embed_feature_value(p, age, 2.0, stats) == 2.0 * base);
  CHECK(embed_feature_value(p, age, -1.0, stats) == -base);
  CHECK((base - p.embed_mean("age")).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(embed_feature_value(p, FeatureDescriptor{"", "", FeatureKind::numerical}, 1.0, stats),
                  ContractViolation);
}

TEST_CASE("cached provider is transparent and persists across instances") {
  TempDir dir;
  auto inner = std::make_shared<StubEmbeddingProvider>(8, 5);
  const auto path = dir / "cache.jsonl";
  {
    CachedEmbeddingProvider cached(inner, std::make_shared<EmbeddingCache>(path));
    for (const char* text : {"age", "Gender: Male", "age", "blood pressure"})
      CHECK(cached.embed_mean(text) == inner->embed_mean(text));
  }
  auto reloaded = std::make_shared<EmbeddingCache>(path);
  CHECK(reloaded->size() == 3);
  CachedEmbeddingProvider read_only(inner->provider_id(), 8, reloaded);
  CHECK(read_only.embed_mean("blood pressure") == inner->embed_mean("blood pressure"));
  CHECK_THROWS_AS(read_only.embed_mean("never seen"), DataError);
}

TEST_CASE("knowledge prompt follows metadata order") {
  Metadata m = latte::testing::numeric_metadata(2);
  m.task_description = "Predict heart disease";
  m.features[1].description = "";
  const auto prompt = render_knowledge_prompt(m);
  CHECK(prompt.rfind("Predict heart disease", 0) == 0);
  const auto first = prompt.find("– f0: feature number 0\n");
  const auto second = prompt.find("– f1: \n");
  CHECK(first != std::string::npos);
  CHECK(second != std::string::npos);
  CHECK(first < second);
  CHECK(prompt.find("neg, pos") != std::string::npos);
  CHECK(render_knowledge_prompt(m) == prompt);
  std::swap(m.features[0], m.features[1]);
  CHECK(render_knowledge_prompt(m) != prompt);
}

TEST_CASE("layer parsing accepts integers and the last-layer alias") {
  CHECK(parse_layer(30) == 30);
  CHECK(parse_layer("last") == kLastLayer);
  CHECK_THROWS_AS(parse_layer("middle"), ConfigError);
  CHECK_THROWS_AS(parse_layer(-3), ConfigError);
}

TEST_CASE("knowledge vector files round-trip and are validated") {
  TempDir dir;
  write_file_atomic(dir / "k.json", R"({"dim":4,"vector":[1,2,3,4],"model_id":"m","layer":30})");
  LlmCallCounter counter;
  const auto k = extract_task_knowledge(KnowledgeSource::file(dir / "k.json"), latte::testing::numeric_metadata(1), 30,
                                        counter);
  CHECK(k.vector == Vector::LinSpaced(4, 1, 4));
  CHECK(counter.snapshot().total() == 0);

  write_knowledge_file(dir / "k2.json", k);
  CHECK(read_knowledge_file(dir / "k2.json").vector == k.vector);

  write_file_atomic(dir / "bad.json", R"({"dim":3,"vector":[1,2,3,4]})");
  CHECK_THROWS_AS(read_knowledge_file(dir / "bad.json"), FormatError);
  write_file_atomic(dir / "nan.json", R"({"dim":2,"vector":[1,"x"]})");
  CHECK_THROWS_AS(read_knowledge_file(dir / "nan.json"), DataError);
  CHECK_THROWS_AS(read_knowledge_file(dir / "absent.json"), MissingArtifactError);
}

TEST_CASE("pooling averages the per-token hidden states") {
  const nlohmann::json response = {{"dim", 2}, {"tokens", 2}, {"hidden_states", {{1, 1}, {3, 3}}}};
  CHECK(pool_hidden_states(response) == Vector::Constant(2, 2.0));
  CHECK_THROWS_AS(pool_hidden_states(response, 3), FormatError);

  Rng rng(9);
  std::vector<Vector> states;
  for (int t = 0; t < 7; ++t) states.push_back(latte::testing::random_vector(5, rng));
  Vector oracle = Vector::Zero(5);
  for (const auto& s : states) oracle += s;
  oracle /= 7.0;
  CHECK((pool_hidden_states(hidden_states_response(states)) - oracle).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("extraction over http makes exactly one preprocessing call") {
  MockHiddenStatesServer server({16, 4, "mock-llm", 0});
  server.start();
  const auto meta = latte::testing::numeric_metadata(3);
  LlmCallCounter counter;
  const auto k = extract_task_knowledge(KnowledgeSource::http(server.url() + "/v1/hidden_states"), meta,
                                        kDefaultLayer, counter);
  CHECK(counter.snapshot() == LlmCallSummary{1, 0, 0});
  CHECK(server.requests() == 1);
  CHECK(k.layer == 30);
  CHECK(k.model_id == "mock-llm");
  CHECK(k.prompt_hash == prompt_hash(render_knowledge_prompt(meta)));
  const auto expected = stub_hidden_states(render_knowledge_prompt(meta), 16, 30, 4);
  Vector mean = Vector::Zero(16);
  for (const auto& s : expected) mean += s;
  mean /= static_cast<double>(expected.size());
  CHECK((k.vector - mean).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("transient endpoint failures are retried") {
  MockHiddenStatesServer server({8, 0, "mock-llm", 2});
  server.start();
  auto source = KnowledgeSource::http(server.url() + "/v1/hidden_states");
  source.retries = 3;
  LlmCallCounter counter;
  const auto k = extract_task_knowledge(source, latte::testing::numeric_metadata(1), 12, counter);
  CHECK(server.requests() == 3);
  CHECK(k.layer == 12);
  CHECK(counter.snapshot().preprocessing == 1);
}

TEST_CASE("an unreachable endpoint raises a transport error with the attempt count") {
  int port = 0;
  {
    MockHiddenStatesServer probe({});
    port = probe.start();
  }
  auto source = KnowledgeSource::http("http://127.0.0.1:" + std::to_string(port) + "/v1/hidden_states");
  source.retries = 2;
  LlmCallCounter counter;
  try {
    extract_task_knowledge(source, latte::testing::numeric_metadata(1), 30, counter);
    FAIL("expected a transport error");
  } catch (const TransportError& e) {
    CHECK(e.attempts() == 2);
  }
  CHECK(counter.snapshot().total() == 0);
}

TEST_CASE("environment variable selects the http source") {
  ::setenv("LATTE_HIDDEN_STATES_URL", "http://127.0.0.1:1/v1/hidden_states", 1);
  auto source = KnowledgeSource::from_environment("k.json");
  CHECK(source.kind == KnowledgeSource::Kind::http);
  ::unsetenv("LATTE_HIDDEN_STATES_URL");
  CHECK(KnowledgeSource::from_environment("k.json").kind == KnowledgeSource::Kind::file);
}

TEST_CASE("call counter is safe under concurrent updates") {
  LlmCallCounter counter;
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t)
    threads.emplace_back([&] {
      for (int i = 0; i < 1000; ++i) counter.add_inference();
    });
  for (auto& t : threads) t.join();
  CHECK(counter.snapshot().inference == 4000);
}
