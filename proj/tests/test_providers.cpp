#include <cmath>
#include <thread>

#include "doctest.h"
#include "proxyq/http.hpp"

#include "proxyq/embed.hpp"
#include "proxyq/ledger.hpp"
#include "proxyq/oracle.hpp"

using namespace proxyq;

TEST_CASE("cost model rejects nonpositive units") {
  CostModel m;
  m.llm_unit = 0;
  CHECK_THROWS_AS(m.validate(), DataError);
  m = CostModel{};
  m.embed_unit = -1;
  CHECK_THROWS_AS(m.validate(), DataError);
  m = CostModel{};
  CHECK_NOTHROW(m.validate());
  CHECK(m.embed_unit == doctest::Approx(m.llm_unit / 3.0));
}

TEST_CASE("ledger closed form: precomputed embeddings at one million rows") {
  // sample 1,000 labels, proxy predicts the rest, embeddings free.
  CostModel m;
  m.llm_unit = 1.0;
  m.embed_unit = 1.0 / 3.0;
  CostLedger led;
  led.add_oracle(1000, false);
  double train_flops = 200.0 * 6 * 1000 * 32;  // iters * grad cost
  double predict_flops = 999000.0 * 32 * 2;
  led.add_train_flops(train_flops);
  led.add_proxy_predictions(999000, predict_flops);
  led.add_sample_flops(1e6);

  auto t = ledger_report(led, m, 1000000, 1);
  double vcpu_s = (train_flops + predict_flops + 1e6) / m.vcpu_flops;
  double expect_cost = 1000.0 * 1.0 + vcpu_s * m.vcpu_rate;
  CHECK(t.cost_proxy_path == doctest::Approx(expect_cost).epsilon(1e-12));
  CHECK(t.cost_llm_baseline == doctest::Approx(1e6));
  CHECK(t.savings_multiplier == doctest::Approx(1e6 / expect_cost));
  CHECK(t.savings_multiplier >= 100.0);
}

TEST_CASE("ledger closed form: on-the-fly savings flatten with scale") {
  CostModel m;
  auto savings = [&](double n) {
    CostLedger led;
    led.add_embed(static_cast<uint64_t>(n / 20), static_cast<uint64_t>(n), 0);
    led.add_oracle(1000, false);
    led.add_proxy_predictions(static_cast<uint64_t>(n - 1000), n * 64);
    return ledger_report(led, m, static_cast<uint64_t>(n), 1)
        .savings_multiplier;
  };
  double s5 = savings(1e5), s6 = savings(1e6);
  double mean = (s5 + s6) / 2;
  CHECK(std::abs(s5 - mean) / mean < 0.10);
  CHECK(std::abs(s6 - mean) / mean < 0.10);
  // The asymptote is 1 / (embed_unit/llm_unit) = 3.
  CHECK(s6 > 2.5);
  CHECK(s6 < 3.0);
}

TEST_CASE("ledger stage latencies divide across workers") {
  CostModel m;
  CostLedger led;
  led.add_oracle(1000, false);
  led.add_train_flops(1e9);
  auto t1 = ledger_report(led, m, 10000, 1);
  auto t8 = ledger_report(led, m, 10000, 8);
  CHECK(t1.stage_label == doctest::Approx(1000 * 0.5));
  CHECK(t8.stage_label == doctest::Approx(1000 * 0.5 / 8));
  // Training is a sequential barrier.
  CHECK(t1.stage_train == doctest::Approx(t8.stage_train));
  CHECK_THROWS_AS(ledger_report(led, m, 100, 0), DataError);
}

TEST_CASE("mock embeddings are deterministic and unit norm") {
  auto spec = EmbedProviderSpec::parse("mock:dim=64,seed=42");
  MockEmbedder e1(spec), e2(spec);
  CostLedger led;
  auto a = e1.embed_batch({"the quick brown fox"}, led);
  auto b = e2.embed_batch({"the quick brown fox"}, led);
  CHECK((a - b).norm() == doctest::Approx(0.0));
  CHECK(std::abs(a.row(0).norm() - 1.0f) < 1e-6f);
}

TEST_CASE("bag construction: repetition and order do not matter") {
  MockEmbedder e(EmbedProviderSpec::parse("mock:dim=32,seed=7"));
  auto v1 = e.embed_one("good good");
  auto v2 = e.embed_one("good");
  CHECK((v1 - v2).norm() < 1e-6f);
  auto p1 = e.embed_one("alpha beta");
  auto p2 = e.embed_one("beta  alpha");
  CHECK((p1 - p2).norm() < 1e-6f);
  // Punctuation-only tokenization differences collapse too.
  auto q1 = e.embed_one("alpha, beta!");
  CHECK((q1 - p1).norm() < 1e-6f);
}

TEST_CASE("batching records ceil(n/batch) provider calls") {
  MockEmbedder e(EmbedProviderSpec::parse("mock:dim=8,seed=1,batch=20"));
  std::vector<std::string> texts;
  texts.reserve(3534);
  for (int i = 0; i < 3534; ++i) texts.push_back("row " + std::to_string(i));
  CostLedger led;
  auto m = e.embed_batch(texts, led);
  CHECK(m.rows() == 3534);
  CHECK(led.embed_calls() == 177);
  CHECK(led.embed_texts() == 3534);
}

TEST_CASE("cache makes re-embedding free") {
  MockEmbedder e(EmbedProviderSpec::parse("mock:dim=8,seed=1"));
  CostLedger led;
  e.embed_batch({"x one", "x two"}, led);
  uint64_t calls = led.embed_calls();
  auto again = e.embed_batch({"x two", "x one"}, led);
  CHECK(led.embed_calls() == calls);  // zero new provider calls
  CHECK(led.cache_hits() == 2);
  CHECK(again.rows() == 2);
}

TEST_CASE("empty text is rejected") {
  MockEmbedder e(EmbedProviderSpec::parse("mock:dim=8,seed=1"));
  CostLedger led;
  CHECK_THROWS_AS(e.embed_batch({"ok", "   "}, led), DataError);
}

TEST_CASE("mock dim is capped") {
  CHECK_THROWS_AS(EmbedProviderSpec::parse("mock:dim=1024"), DataError);
  CHECK_NOTHROW(EmbedProviderSpec::parse("mock:dim=768"));
  CHECK_THROWS_AS(EmbedProviderSpec::parse("mock:dim=0"), DataError);
  CHECK_THROWS_AS(EmbedProviderSpec::parse("mock:dims=3"), DataError);
}

TEST_CASE("mrl truncation") {
  Eigen::VectorXf v(4);
  v << 3, 4, 0, 0;
  auto t = truncate_mrl(v, 2);
  CHECK(t[0] == doctest::Approx(0.6));
  CHECK(t[1] == doctest::Approx(0.8));

  Eigen::VectorXf u = v / v.norm();
  auto full = truncate_mrl(u, 4);
  CHECK((full - u).norm() < 1e-6f);

  CHECK_THROWS_AS(truncate_mrl(v, 0), DataError);
  CHECK_THROWS_AS(truncate_mrl(v, 5), DataError);

  // Prefix consistency: truncating a truncation equals truncating the
  // original to the shorter length.
  MockEmbedder e(EmbedProviderSpec::parse("mock:dim=64,seed=3"));
  Eigen::VectorXf w = e.embed_one("some sentence with several words");
  for (int d2 : {8, 16, 32}) {
    auto direct = truncate_mrl(w, d2);
    auto nested = truncate_mrl(truncate_mrl(w, 48), d2);
    CHECK((direct - nested).norm() < 1e-5f);
  }
}

namespace {

std::unordered_map<int64_t, int> make_gold(int n, int classes) {
  std::unordered_map<int64_t, int> g;
  for (int i = 0; i < n; ++i) g[i] = i % classes;
  return g;
}

}  // namespace

TEST_CASE("mock oracle with zero noise returns planted truth") {
  auto spec = OracleSpec::parse("mock:noise=0,seed=42");
  MockOracle o(spec);
  o.set_gold(make_gold(100, 2));
  CostLedger led;
  std::vector<int64_t> ids{0, 1, 2, 3};
  auto res = o.label_batch("p", ids, {}, false, led);
  REQUIRE(res.labels.size() == 4);
  for (size_t i = 0; i < 4; ++i) {
    CHECK(res.labels[i].id == ids[i]);
    CHECK(res.labels[i].value == static_cast<int>(ids[i] % 2));
  }
  CHECK(led.oracle_label_calls() == 4);
  CHECK(led.oracle_requests() == 1);
}

TEST_CASE("mock oracle with full noise complements binary truth") {
  MockOracle o(OracleSpec::parse("mock:noise=1,seed=42"));
  o.set_gold(make_gold(50, 2));
  CostLedger led;
  std::vector<int64_t> ids;
  for (int i = 0; i < 50; ++i) ids.push_back(i);
  auto res = o.label_batch("p", ids, {}, false, led);
  for (const auto& lr : res.labels)
    CHECK(lr.value == 1 - static_cast<int>(lr.id % 2));
}

TEST_CASE("seeded flip fraction lands inside the binomial band") {
  MockOracle o(OracleSpec::parse("mock:noise=0.02,seed=42"));
  o.set_gold(make_gold(10000, 2));
  CostLedger led;
  std::vector<int64_t> ids;
  for (int i = 0; i < 10000; ++i) ids.push_back(i);
  auto res = o.label_batch("p", ids, {}, false, led);
  int flips = 0;
  for (const auto& lr : res.labels)
    if (lr.value != static_cast<int>(lr.id % 2)) ++flips;
  double frac = flips / 10000.0;
  CHECK(frac >= 0.01);
  CHECK(frac <= 0.03);
}

TEST_CASE("labels are pure in (seed, id): reuse is exact") {
  MockOracle o(OracleSpec::parse("mock:noise=0.3,seed=9"));
  o.set_gold(make_gold(200, 2));
  CostLedger led;
  std::vector<int64_t> subset{5, 17, 99};
  auto first = o.label_batch("p", subset, {}, false, led);
  std::vector<int64_t> all;
  for (int i = 0; i < 200; ++i) all.push_back(i);
  auto second = o.label_batch("p", all, {}, false, led);
  for (size_t k = 0; k < subset.size(); ++k)
    CHECK(first.labels[k].value == second.labels[subset[k]].value);
}

TEST_CASE("fallback labels route to their own counter") {
  MockOracle o(OracleSpec::parse("mock:noise=0,seed=1"));
  o.set_gold(make_gold(10, 2));
  CostLedger led;
  o.label_batch("p", {0, 1, 2}, {}, false, led);
  o.label_batch("p", {3, 4}, {}, true, led);
  CHECK(led.oracle_label_calls() == 3);
  CHECK(led.oracle_fallback_calls() == 2);
}

TEST_CASE("multiclass noise flips into a different class") {
  MockOracle o(OracleSpec::parse("mock:noise=1,seed=4,task=multiclass,classes=5"));
  o.set_gold(make_gold(500, 5));
  CostLedger led;
  std::vector<int64_t> ids;
  for (int i = 0; i < 500; ++i) ids.push_back(i);
  auto res = o.label_batch("p", ids, {}, false, led);
  for (const auto& lr : res.labels) {
    CHECK(lr.value != static_cast<int>(lr.id % 5));
    CHECK(lr.value >= 0);
    CHECK(lr.value < 5);
  }
}

TEST_CASE("relevance judgments clamp noise to the rubric range") {
  MockOracle o(OracleSpec::parse("mock:noise=0,seed=2,task=relevance,levels=4"));
  std::unordered_map<int64_t, std::unordered_map<int64_t, int>> qrels;
  for (int d = 0; d < 40; ++d) qrels[1][d] = d % 4;
  o.set_qrels(std::move(qrels));
  CostLedger led;
  std::vector<int64_t> docs;
  for (int d = 0; d < 40; ++d) docs.push_back(d);
  auto clean = o.label_relevance_batch("q", 1, docs, {}, false, led);
  CHECK(clean.labels[3].value == 3);
  CHECK(clean.labels[7].value == 3);
  CHECK(clean.labels[4].value == 0);

  MockOracle noisy(
      OracleSpec::parse("mock:noise=1,seed=2,task=relevance,levels=4"));
  std::unordered_map<int64_t, std::unordered_map<int64_t, int>> q2;
  for (int d = 0; d < 400; ++d) q2[1][d] = d % 4;
  noisy.set_qrels(std::move(q2));
  std::vector<int64_t> docs2;
  for (int d = 0; d < 400; ++d) docs2.push_back(d);
  auto res = noisy.label_relevance_batch("q", 1, docs2, {}, false, led);
  for (const auto& lr : res.labels) {
    int gold = static_cast<int>(lr.id % 4);
    CHECK(lr.value >= 0);
    CHECK(lr.value <= 3);
    CHECK(std::abs(lr.value - gold) <= 1);
  }
}

TEST_CASE("unknown ids and bad specs fail loudly") {
  MockOracle o(OracleSpec::parse("mock:noise=0,seed=1"));
  o.set_gold(make_gold(3, 2));
  CostLedger led;
  CHECK_THROWS_AS(o.label_batch("p", {99}, {}, false, led), DataError);
  CHECK_THROWS_AS(OracleSpec::parse("mock:noise=1.5"), DataError);
  CHECK_THROWS_AS(OracleSpec::parse("gpt:model=x"), DataError);
  CHECK_THROWS_AS(OracleSpec::parse("mock:task=relevance,levels=1"),
                  DataError);
}

namespace {

struct TestServer {
  httplib::Server srv;
  std::thread th;
  int port = 0;

  TestServer() = default;

  void start() {
    port = srv.bind_to_any_port("127.0.0.1");
    th = std::thread([this] { srv.listen_after_bind(); });
    srv.wait_until_ready();
  }

  ~TestServer() {
    srv.stop();
    if (th.joinable()) th.join();
  }
};

}  // namespace

TEST_CASE("remote embedder round trip against a local endpoint") {
  TestServer ts;
  ts.srv.Post("/embed", [](const httplib::Request& req,
                           httplib::Response& res) {
    auto body = nlohmann::json::parse(req.body);
    nlohmann::json vectors = nlohmann::json::array();
    for (const auto& t : body.at("texts")) {
      std::string s = t.get<std::string>();
      // Deterministic 4-dim stub: length-based.
      vectors.push_back({1.0 * s.size(), 1.0, 0.0, 0.0});
    }
    res.set_content(nlohmann::json{{"vectors", vectors}}.dump(),
                    "application/json");
  });
  ts.start();

  auto spec = EmbedProviderSpec::parse(
      "remote:url=http://127.0.0.1:" + std::to_string(ts.port) +
      "/embed,dim=4,batch=2");
  RemoteEmbedder e(spec);
  CostLedger led;
  auto m = e.embed_batch({"abc", "de", "fghij"}, led);
  REQUIRE(m.rows() == 3);
  CHECK(led.embed_calls() == 2);  // ceil(3/2)
  CHECK(std::abs(m.row(0).norm() - 1.0f) < 1e-6f);
  // Order preserved: row 0 came from "abc" (length 3).
  CHECK(m(0, 0) / m(0, 1) == doctest::Approx(3.0));
  CHECK(m(2, 0) / m(2, 1) == doctest::Approx(5.0));
}

TEST_CASE("remote embedder retries then fails on a dead endpoint") {
  auto spec = EmbedProviderSpec::parse(
      "remote:url=http://127.0.0.1:1/embed,dim=4,attempts=2");
  RemoteEmbedder e(spec);
  CostLedger led;
  CHECK_THROWS_AS(e.embed_batch({"x"}, led), TransportError);
}

TEST_CASE("remote oracle labels by id and excludes junk values") {
  TestServer ts;
  ts.srv.Post("/label", [](const httplib::Request& req,
                           httplib::Response& res) {
    auto body = nlohmann::json::parse(req.body);
    nlohmann::json labels = nlohmann::json::array();
    for (const auto& item : body.at("items")) {
      int64_t id = item.at("id").get<int64_t>();
      if (id == 7) {
        labels.push_back({{"id", id}, {"value", "yes"}});  // unparseable
      } else if (id == 8) {
        // missing entirely
      } else {
        labels.push_back({{"id", id}, {"value", id % 2}});
      }
    }
    res.set_content(nlohmann::json{{"labels", labels}}.dump(),
                    "application/json");
  });
  ts.start();

  auto spec = OracleSpec::parse("remote:url=http://127.0.0.1:" +
                                std::to_string(ts.port) + "/label");
  RemoteOracle o(spec);
  CostLedger led;
  auto res = o.label_batch("is it even?", {4, 7, 8, 9},
                           {"a", "b", "c", "d"}, false, led);
  CHECK(res.excluded == 2);
  REQUIRE(res.labels.size() == 2);
  CHECK(res.labels[0].id == 4);
  CHECK(res.labels[0].value == 0);
  CHECK(res.labels[1].id == 9);
  CHECK(res.labels[1].value == 1);
  CHECK(led.oracle_label_calls() == 4);
}
