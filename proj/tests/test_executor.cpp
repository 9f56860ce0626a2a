#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "doctest.h"
#include "proxyq/errors.hpp"
#include "proxyq/executor.hpp"
#include "proxyq/jsonl.hpp"
#include "proxyq/metrics.hpp"
#include "proxyq/rng.hpp"
#include "proxyq/synth.hpp"

using namespace proxyq;

namespace {

SynthData filter_data(int64_t rows, double rho, double sep, uint64_t seed,
                      int dim = 16, double noise = 0.0, int classes = 2) {
  SynthSpec spec;
  spec.mode = classes > 2 ? SynthMode::Classify : SynthMode::Filter;
  spec.n_rows = rows;
  spec.n_classes = classes;
  spec.imbalance_ratio = rho;
  spec.cluster_separation = sep;
  spec.dim = dim;
  spec.oracle_noise = noise;
  spec.seed = seed;
  return generate_synth(spec);
}

MockOracle gold_oracle(const SynthData& d, double noise = 0.0,
                       uint64_t seed = 42) {
  OracleSpec spec;
  spec.kind = OracleSpec::Kind::Mock;
  spec.task = OracleTask::Binary;
  spec.noise_rate = noise;
  spec.seed = seed;
  MockOracle oracle(spec);
  std::unordered_map<int64_t, int> gold;
  for (size_t i = 0; i < d.gold.size(); ++i)
    gold[d.table.ids()[i]] = d.gold[i];
  oracle.set_gold(std::move(gold));
  return oracle;
}

LogicalPlan if_plan(const std::string& extra = "") {
  return parse_query("SELECT * FROM t WHERE AI.IF('is it positive?', text)" +
                     extra);
}

uint64_t billed_rows(const CostLedger& l) {
  return l.oracle_label_calls() + l.oracle_fallback_calls() +
         l.proxy_predictions();
}

std::string write_gold_file(const std::string& path,
                            const std::map<int64_t, int>& gold) {
  std::string body;
  for (const auto& [id, label] : gold)
    body += json{{"id", id}, {"label", label}}.dump() + "\n";
  write_text_file(path, body);
  return path;
}

}  // namespace

TEST_CASE("filter run conserves label sources across seeds") {
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    SynthData d = filter_data(1500, 3.0, 2.5, seed);
    MockOracle oracle = gold_oracle(d);
    Providers pv{&oracle, nullptr, &d.embeddings};
    RunConfig cfg;
    cfg.sample = "random:n=300,seed=5";
    cfg.seed = seed;
    ExecutionReport r = run_filter(if_plan(), d.table, pv, cfg);

    CHECK(r.n_rows == 1500);
    CHECK(billed_rows(r.ledger) == 1500);
    CHECK(r.outputs.size() == 1500);
    if (!r.fallback) {
      CHECK(r.ledger.oracle_label_calls() == 300);
      CHECK(r.ledger.oracle_fallback_calls() == 0);
      CHECK(r.ledger.proxy_predictions() == 1200);
    } else {
      CHECK(r.ledger.oracle_label_calls() == 300);
      CHECK(r.ledger.oracle_fallback_calls() == 1200);
      CHECK(r.ledger.proxy_predictions() == 0);
    }
  }
}

TEST_CASE("well separated filter picks the proxy and keeps quality") {
  SynthData d = filter_data(4000, 4.0, 3.0, 11);
  MockOracle oracle = gold_oracle(d);
  Providers pv{&oracle, nullptr, &d.embeddings};
  RunConfig cfg;
  cfg.sample = "random:n=500,seed=3";

  std::map<int64_t, int> gold;
  for (size_t i = 0; i < d.gold.size(); ++i) gold[d.table.ids()[i]] = d.gold[i];
  cfg.gold_path = write_gold_file("exec_gold_tmp.jsonl", gold);

  ExecutionReport r = run_filter(if_plan(), d.table, pv, cfg);
  std::remove(cfg.gold_path.c_str());

  REQUIRE(r.decisions.size() == 1);
  CHECK(r.decisions[0].chosen == RoutePick::Proxy);
  CHECK(!r.fallback);
  CHECK(r.quality.at("evaluated").get<int64_t>() == 4000);
  CHECK(r.quality.at("accuracy").get<double>() >= 0.9);
  CHECK(r.quality.at("f1").get<double>() >= 0.8);
  CHECK(r.totals.savings_multiplier > 1.0);
}

TEST_CASE("adversarial labels force fallback billed at exactly n") {
  SynthData d = filter_data(900, 1.5, 2.0, 4);
  OracleSpec spec;
  spec.kind = OracleSpec::Kind::Mock;
  MockOracle oracle(spec);
  Rng rng(909);
  std::unordered_map<int64_t, int> noise_gold;
  for (int64_t id : d.table.ids())
    noise_gold[id] = static_cast<int>(rng.uniform_int(2));
  oracle.set_gold(noise_gold);

  Providers pv{&oracle, nullptr, &d.embeddings};
  RunConfig cfg;
  cfg.sample = "random:n=200,seed=8";
  ExecutionReport r = run_filter(if_plan(), d.table, pv, cfg);

  REQUIRE(r.decisions.size() == 1);
  CHECK(r.decisions[0].chosen == RoutePick::Llm);
  CHECK(r.fallback);
  CHECK(r.ledger.oracle_label_calls() == 200);
  CHECK(r.ledger.oracle_fallback_calls() == 700);
  CHECK(r.ledger.proxy_predictions() == 0);
  for (const auto& [id, label] : r.outputs)
    CHECK(label == noise_gold.at(id));
}

TEST_CASE("sample covering every row degenerates to oracle labels") {
  SynthData d = filter_data(300, 2.0, 2.5, 9);
  MockOracle oracle = gold_oracle(d);
  Providers pv{&oracle, nullptr, &d.embeddings};
  RunConfig cfg;
  cfg.sample = "random:n=300,seed=2";
  ExecutionReport r = run_filter(if_plan(), d.table, pv, cfg);

  CHECK(r.ledger.oracle_label_calls() == 300);
  CHECK(r.ledger.proxy_predictions() == 0);
  CHECK(r.ledger.oracle_fallback_calls() == 0);
  for (size_t i = 0; i < d.gold.size(); ++i)
    CHECK(r.outputs.at(d.table.ids()[i]) == d.gold[i]);
  CHECK(r.totals.savings_multiplier < 1.0);
  CHECK(r.totals.savings_multiplier > 0.5);

  RunConfig big = cfg;
  big.sample = "random:n=5000,seed=2";
  ExecutionReport r2 = run_filter(if_plan(), d.table, pv, big);
  CHECK(r2.ledger.oracle_label_calls() == 300);
  bool noted = false;
  for (const std::string& n : r2.notes)
    if (n.find("clamped") != std::string::npos) noted = true;
  CHECK(noted);
}

TEST_CASE("relational predicates gate the pipeline and the outputs") {
  SynthData d = filter_data(1000, 2.0, 2.5, 13);
  MockOracle oracle = gold_oracle(d);
  Providers pv{&oracle, nullptr, &d.embeddings};
  RunConfig cfg;
  cfg.sample = "random:n=200,seed=4";
  LogicalPlan plan = parse_query(
      "SELECT * FROM t WHERE bucket < 4 AND AI.IF('is it positive?', text)");
  ExecutionReport r = run_filter(plan, d.table, pv, cfg);

  size_t survivors = 0;
  for (size_t row = 0; row < d.table.n_rows(); ++row) {
    int64_t bucket = std::get<int64_t>(d.table.cell(row, "bucket"));
    int64_t id = d.table.id_at(row);
    if (bucket < 4) {
      ++survivors;
      CHECK(r.outputs.count(id) == 1);
    } else {
      CHECK(r.outputs.count(id) == 0);
    }
  }
  CHECK(r.outputs.size() == survivors);
  CHECK(r.n_rows == survivors);
  CHECK(billed_rows(r.ledger) == survivors);
}

TEST_CASE("multi-op filters run left to right on survivors") {
  SynthData d = filter_data(1200, 2.0, 3.0, 17);
  MockOracle oracle = gold_oracle(d);
  Providers pv{&oracle, nullptr, &d.embeddings};
  RunConfig cfg;
  cfg.sample = "random:n=200,seed=6";
  LogicalPlan plan = parse_query(
      "SELECT * FROM t WHERE AI.IF('is it positive?', text) AND "
      "AI.IF('still positive?', text)");
  ExecutionReport r = run_filter(plan, d.table, pv, cfg);

  REQUIRE(r.decisions.size() == 2);
  int64_t positives = 0;
  for (const auto& [id, label] : r.outputs)
    if (label == 1) ++positives;
  CHECK(positives > 0);
  CHECK(r.outputs.size() == 1200);
  CHECK(r.n_rows > 1200);
  CHECK(r.n_rows < 2400);
  CHECK(billed_rows(r.ledger) == r.n_rows);
  // Both sample the same prompt-free gold, so op two sees one class
  // and must route to the oracle.
  CHECK(r.decisions[1].chosen == RoutePick::Llm);
}

TEST_CASE("classify runs five categories end to end") {
  SynthData d = filter_data(2500, 2.0, 3.0, 21, 16, 0.0, 5);
  MockOracle oracle = gold_oracle(d);
  Providers pv{&oracle, nullptr, &d.embeddings};
  RunConfig cfg;
  cfg.sample = "random:n=1000,seed=7";
  LogicalPlan plan = parse_query(
      "SELECT AI.CLASSIFY('which topic?', text, 'a', 'b', 'c', 'd', 'e') "
      "FROM t");

  std::map<int64_t, int> gold;
  for (size_t i = 0; i < d.gold.size(); ++i) gold[d.table.ids()[i]] = d.gold[i];
  cfg.gold_path = write_gold_file("exec_cls_gold_tmp.jsonl", gold);
  ExecutionReport r = run_classify(plan, d.table, pv, cfg);
  std::remove(cfg.gold_path.c_str());

  REQUIRE(r.decisions.size() == 1);
  CHECK(r.decisions[0].metric == GateMetric::MacroF1);
  CHECK(r.outputs.size() == 2500);
  CHECK(billed_rows(r.ledger) == 2500);
  CHECK(r.quality.at("macro_f1").get<double>() >= 0.8);
  std::set<int> seen;
  for (const auto& [id, label] : r.outputs) seen.insert(label);
  CHECK(seen.size() == 5);
}

TEST_CASE("classify rejects degenerate category lists") {
  SynthData d = filter_data(300, 1.5, 2.0, 3);
  MockOracle oracle = gold_oracle(d);
  Providers pv{&oracle, nullptr, &d.embeddings};
  RunConfig cfg;
  LogicalPlan one = parse_query(
      "SELECT AI.CLASSIFY('topic?', text, 'only') FROM t");
  CHECK_THROWS_WITH_AS(run_classify(one, d.table, pv, cfg),
                       "classification requires >= 2 categories", DataError);
  LogicalPlan none = parse_query("SELECT AI.CLASSIFY('topic?', text) FROM t");
  CHECK_THROWS_AS(run_classify(none, d.table, pv, cfg), DataError);
}

TEST_CASE("category absent from the sample is noted") {
  SynthData d = filter_data(1500, 2.0, 3.0, 23, 16, 0.0, 5);
  MockOracle oracle = gold_oracle(d);
  Providers pv{&oracle, nullptr, &d.embeddings};
  RunConfig cfg;
  cfg.sample = "random:n=600,seed=9";
  LogicalPlan plan = parse_query(
      "SELECT AI.CLASSIFY('which topic?', text, 'a', 'b', 'c', 'd', 'e', "
      "'phantom') FROM t");
  ExecutionReport r = run_classify(plan, d.table, pv, cfg);
  bool noted = false;
  for (const std::string& n : r.notes)
    if (n.find("'phantom' absent") != std::string::npos) noted = true;
  CHECK(noted);
  CHECK(r.outputs.size() == 1500);
}

TEST_CASE("per-class multiplier scales the classify sample") {
  SynthData d = filter_data(3000, 1.5, 3.0, 29, 16, 0.0, 5);
  MockOracle oracle = gold_oracle(d);
  Providers pv{&oracle, nullptr, &d.embeddings};
  RunConfig cfg;
  cfg.sample = "random:n=100,seed=2";
  cfg.classify_sample_per_class = 300;
  LogicalPlan plan = parse_query(
      "SELECT AI.CLASSIFY('which topic?', text, 'a', 'b', 'c', 'd', 'e') "
      "FROM t");
  ExecutionReport r = run_classify(plan, d.table, pv, cfg);
  CHECK(r.ledger.oracle_label_calls() == 1500);

  cfg.classify_sample_per_class = 0;
  ExecutionReport r2 = run_classify(plan, d.table, pv, cfg);
  CHECK(r2.ledger.oracle_label_calls() == 100);
}

TEST_CASE("identical config and seed produce byte-identical reports") {
  SynthData d = filter_data(800, 2.0, 2.5, 31);
  MockOracle oracle = gold_oracle(d);
  Providers pv{&oracle, nullptr, &d.embeddings};
  RunConfig cfg;
  cfg.sample = "random:n=200,seed=11";
  ExecutionReport a = run_filter(if_plan(), d.table, pv, cfg);
  ExecutionReport b = run_filter(if_plan(), d.table, pv, cfg);
  CHECK(a.to_json_text() == b.to_json_text());

  RunConfig other = cfg;
  other.seed = 99;
  ExecutionReport c = run_filter(if_plan(), d.table, pv, other);
  CHECK(a.to_json_text() != c.to_json_text());
}

TEST_CASE("worker counts do not change any output") {
  SynthData d = filter_data(1200, 2.5, 2.5, 37);
  MockOracle oracle = gold_oracle(d);
  Providers pv{&oracle, nullptr, &d.embeddings};
  RunConfig one;
  one.sample = "random:n=250,seed=13";
  one.workers = 1;
  RunConfig eight = one;
  eight.workers = 8;

  ExecutionReport a = run_filter(if_plan(), d.table, pv, one);
  ExecutionReport b = run_filter(if_plan(), d.table, pv, eight);
  CHECK(a.outputs == b.outputs);
  CHECK(a.ledger.counts_json() == b.ledger.counts_json());
  CHECK(decision_to_json(a.decisions[0]) == decision_to_json(b.decisions[0]));

  nlohmann::json ja = a.to_json();
  nlohmann::json jb = b.to_json();
  ja.erase("config");
  jb.erase("config");
  ja.erase("totals");
  jb.erase("totals");
  CHECK(ja == jb);
}

TEST_CASE("embedder fills vectors when no store is given") {
  SynthData d = filter_data(400, 2.0, 3.0, 41);
  MockOracle oracle = gold_oracle(d);
  EmbedProviderSpec espec = EmbedProviderSpec::parse("mock:dim=32,seed=1");
  MockEmbedder embedder(espec);
  Providers pv{&oracle, &embedder, nullptr};
  RunConfig cfg;
  cfg.sample = "random:n=120,seed=3";
  ExecutionReport r = run_filter(if_plan(), d.table, pv, cfg);

  std::set<std::string> unique;
  for (size_t row = 0; row < d.table.n_rows(); ++row)
    unique.insert(d.table.text_cell(row, "text"));
  CHECK(r.ledger.embed_texts() == unique.size());
  CHECK(r.ledger.embed_calls() == (unique.size() + 19) / 20);
  CHECK(r.ledger.cache_hits() == 0);
  CHECK(r.outputs.size() == 400);
  CHECK(billed_rows(r.ledger) == 400);
}

TEST_CASE("precomputed store hits are booked as cache hits") {
  SynthData d = filter_data(500, 2.0, 2.5, 43);
  MockOracle oracle = gold_oracle(d);
  Providers pv{&oracle, nullptr, &d.embeddings};
  RunConfig cfg;
  cfg.sample = "random:n=150,seed=5";
  ExecutionReport r = run_filter(if_plan(), d.table, pv, cfg);
  CHECK(r.ledger.cache_hits() == 500);
  CHECK(r.ledger.embed_calls() == 0);
  CHECK(r.ledger.embed_texts() == 0);
}

TEST_CASE("holdout file drives the gate evaluation") {
  SynthData d = filter_data(1000, 2.0, 3.0, 47);
  MockOracle oracle = gold_oracle(d);
  Providers pv{&oracle, nullptr, &d.embeddings};
  RunConfig cfg;
  cfg.sample = "random:n=250,seed=7";

  std::map<int64_t, int> holdout;
  for (size_t i = 0; i < 200; ++i)
    holdout[d.table.ids()[i]] = d.gold[i];
  cfg.holdout_path = write_gold_file("exec_holdout_tmp.jsonl", holdout);
  ExecutionReport r = run_filter(if_plan(), d.table, pv, cfg);
  std::remove(cfg.holdout_path.c_str());

  REQUIRE(r.decisions.size() == 1);
  CHECK(r.decisions[0].eval_set == EvalSet::HoldoutFile);
  CHECK(r.decisions[0].chosen == RoutePick::Proxy);
}

TEST_CASE("offline training then offline execution") {
  SynthData d = filter_data(2000, 2.5, 3.0, 53);
  MockOracle oracle = gold_oracle(d);
  Providers pv{&oracle, nullptr, &d.embeddings};

  RunConfig train_cfg;
  train_cfg.sample = "random:n=400,seed=9";
  train_cfg.model_path = "exec_model_tmp.json";
  ExecutionReport t = train_offline(if_plan(), d.table, pv, train_cfg);
  REQUIRE(t.decisions.size() == 1);
  CHECK(t.ledger.oracle_label_calls() == 400);
  CHECK(t.ledger.proxy_predictions() == 0);

  RunConfig off_cfg;
  off_cfg.model_path = train_cfg.model_path;
  ExecutionReport o = run_offline(if_plan(), d.table, pv, off_cfg);
  CHECK(o.ledger.oracle_label_calls() == 0);
  CHECK(o.ledger.oracle_fallback_calls() == 0);
  CHECK(o.ledger.proxy_predictions() == 2000);
  CHECK(o.ledger.train_flops() == 0.0);
  CHECK(o.outputs.size() == 2000);

  int64_t agree = 0;
  for (size_t i = 0; i < d.gold.size(); ++i)
    if (o.outputs.at(d.table.ids()[i]) == d.gold[i]) ++agree;
  CHECK(static_cast<double>(agree) / 2000.0 >= 0.9);

  RunConfig on_cfg;
  on_cfg.sample = "random:n=400,seed=9";
  ExecutionReport online = run_filter(if_plan(), d.table, pv, on_cfg);
  CHECK(o.totals.latency_multiplier >= online.totals.latency_multiplier);

  std::remove(train_cfg.model_path.c_str());
}

TEST_CASE("drifted data trips the stale-model alarm") {
  SynthData d = filter_data(1500, 2.0, 3.0, 59);
  MockOracle oracle = gold_oracle(d);
  Providers pv{&oracle, nullptr, &d.embeddings};

  RunConfig train_cfg;
  train_cfg.sample = "random:n=300,seed=4";
  train_cfg.model_path = "exec_drift_model_tmp.json";
  train_offline(if_plan(), d.table, pv, train_cfg);

  // Planted shift: the class directions swap, so stored agreement no
  // longer transfers.
  std::map<int64_t, int> flipped;
  for (size_t i = 0; i < 400; ++i)
    flipped[d.table.ids()[i]] = 1 - d.gold[i];
  RunConfig off_cfg;
  off_cfg.model_path = train_cfg.model_path;
  off_cfg.holdout_path = write_gold_file("exec_drift_holdout_tmp.jsonl",
                                         flipped);
  off_cfg.drift_alarm = 0.2;
  ExecutionReport r = run_offline(if_plan(), d.table, pv, off_cfg);
  std::remove(off_cfg.holdout_path.c_str());
  std::remove(train_cfg.model_path.c_str());

  REQUIRE(r.decisions.size() == 1);
  CHECK(r.decisions[0].chosen == RoutePick::Llm);
  bool noted = false;
  for (const std::string& n : r.notes)
    if (n.find("retraining recommended") != std::string::npos) noted = true;
  CHECK(noted);
  CHECK(r.ledger.oracle_fallback_calls() == 1500);
  CHECK(billed_rows(r.ledger) == 1500);
}

TEST_CASE("offline model task checks") {
  SynthData d = filter_data(600, 2.0, 3.0, 61, 16, 0.0, 3);
  MockOracle oracle = gold_oracle(d);
  Providers pv{&oracle, nullptr, &d.embeddings};
  RunConfig train_cfg;
  train_cfg.sample = "random:n=300,seed=2";
  train_cfg.model_path = "exec_task_model_tmp.json";
  LogicalPlan cls = parse_query(
      "SELECT AI.CLASSIFY('topic?', text, 'a', 'b', 'c') FROM t");
  train_offline(cls, d.table, pv, train_cfg);

  RunConfig off_cfg;
  off_cfg.model_path = train_cfg.model_path;
  CHECK_THROWS_AS(run_offline(if_plan(), d.table, pv, off_cfg), DataError);

  LogicalPlan two = parse_query(
      "SELECT AI.CLASSIFY('topic?', text, 'a', 'b') FROM t");
  CHECK_THROWS_AS(run_offline(two, d.table, pv, off_cfg), DataError);
  std::remove(train_cfg.model_path.c_str());
}

TEST_CASE("offline dimension mismatch is rejected") {
  SynthData d = filter_data(600, 2.0, 3.0, 67);
  MockOracle oracle = gold_oracle(d);
  Providers pv{&oracle, nullptr, &d.embeddings};
  RunConfig train_cfg;
  train_cfg.sample = "random:n=200,seed=2";
  train_cfg.model_path = "exec_dim_model_tmp.json";
  train_offline(if_plan(), d.table, pv, train_cfg);

  SynthData wide = filter_data(600, 2.0, 3.0, 67, 24);
  MockOracle oracle2 = gold_oracle(wide);
  Providers pv2{&oracle2, nullptr, &wide.embeddings};
  RunConfig off_cfg;
  off_cfg.model_path = train_cfg.model_path;
  CHECK_THROWS_AS(run_offline(if_plan(), wide.table, pv2, off_cfg), DataError);
  std::remove(train_cfg.model_path.c_str());
}
