#include <cstdio>
#include <string>

#include "doctest.h"
#include "json.hpp"

#include "proxyq/config.hpp"
#include "proxyq/errors.hpp"
#include "proxyq/jsonl.hpp"

using namespace proxyq;
using json = nlohmann::json;

TEST_CASE("config defaults survive a json round trip") {
  RunConfig c;
  RunConfig back = RunConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.sample == "random:n=1000,seed=42");
  CHECK(back.tau == 0.1);
  CHECK(back.prefilter == 500);
  CHECK(back.rank_train_n == 200);
  CHECK(back.rank_cutoff == 10);
  CHECK(back.minority_floor == 100);
  CHECK(back.workers == 1);
  CHECK(!back.require_proxy);
  CHECK(back.costs.embed_unit == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("config json dumps are byte-stable") {
  RunConfig c;
  c.query = "SELECT * FROM t WHERE AI.IF('is it urgent?', text)";
  c.tau = 0.25;
  std::string a = c.to_json().dump();
  std::string b = RunConfig::from_json(c.to_json()).to_json().dump();
  CHECK(a == b);
}

TEST_CASE("partial json patches only the keys present") {
  RunConfig base;
  base.table_path = "t.jsonl";
  base.seed = 7;

  json patch = {{"tau", 0.3}, {"workers", 8}, {"sample", "topk:k=250"}};
  RunConfig c = RunConfig::from_json(patch, base);
  CHECK(c.tau == 0.3);
  CHECK(c.workers == 8);
  CHECK(c.sample == "topk:k=250");
  CHECK(c.table_path == "t.jsonl");
  CHECK(c.seed == 7);
  CHECK(c.costs.llm_unit == 1.0);
}

TEST_CASE("flat cost keys reach the cost model") {
  json j = {{"llm_unit", 2.0},
            {"embed_unit", 0.5},
            {"provider_latencies", {{"llm_unit_latency", 1.25}}}};
  RunConfig c = RunConfig::from_json(j);
  CHECK(c.costs.llm_unit == 2.0);
  CHECK(c.costs.embed_unit == 0.5);
  CHECK(c.costs.llm_unit_latency == 1.25);
  CHECK(c.costs.embed_unit_latency == 0.05);
  CHECK(c.costs.vcpu_rate == 0.01);

  json nested = {{"costs", {{"vcpu_rate", 0.02}}}};
  RunConfig n = RunConfig::from_json(nested);
  CHECK(n.costs.vcpu_rate == 0.02);
  CHECK(n.costs.llm_unit == 1.0);
}

TEST_CASE("config rejects unknown keys and bad ranges") {
  CHECK_THROWS_WITH_AS(RunConfig::from_json(json{{"taus", 0.1}}),
                       "unknown config key: taus", DataError);
  CHECK_THROWS_AS(RunConfig::from_json(json::array()), DataError);
  CHECK_THROWS_AS(RunConfig::from_json(json{{"tau", 1.5}}), DataError);
  CHECK_THROWS_AS(RunConfig::from_json(json{{"tau", -0.1}}), DataError);
  CHECK_THROWS_AS(RunConfig::from_json(json{{"workers", 0}}), DataError);
  CHECK_THROWS_AS(RunConfig::from_json(json{{"filter_threshold", 0.0}}),
                  DataError);
  CHECK_THROWS_AS(RunConfig::from_json(json{{"filter_threshold", 1.0}}),
                  DataError);
  CHECK_THROWS_AS(RunConfig::from_json(json{{"prefilter", 0}}), DataError);
  CHECK_THROWS_AS(RunConfig::from_json(json{{"rank_train_n", -5}}), DataError);
  CHECK_THROWS_AS(RunConfig::from_json(json{{"rank_cutoff", 0}}), DataError);
  CHECK_THROWS_AS(RunConfig::from_json(json{{"drift_alarm", 2.0}}), DataError);
  CHECK_THROWS_AS(RunConfig::from_json(json{{"llm_unit", -1.0}}), DataError);
  CHECK_THROWS_AS(RunConfig::from_json(json{{"minority_floor", -1}}),
                  DataError);
}

TEST_CASE("config file loading") {
  std::string path = "test_config_tmp.json";
  write_text_file(path, R"({"tau": 0.05, "workers": 4, "llm_unit": 3.0})");
  RunConfig c = load_config_file(path);
  CHECK(c.tau == 0.05);
  CHECK(c.workers == 4);
  CHECK(c.costs.llm_unit == 3.0);

  write_text_file(path, "{not json");
  CHECK_THROWS_AS(load_config_file(path), DataError);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_config_file("no_such_config.json"), DataError);
}
