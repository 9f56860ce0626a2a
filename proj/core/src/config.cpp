#include "proxyq/config.hpp"

#include <set>
#include <string>

#include "proxyq/errors.hpp"
#include "proxyq/jsonl.hpp"

namespace proxyq {

void RunConfig::validate() const {
  if (tau < 0.0 || tau > 1.0)
    throw DataError("tau must lie in [0, 1], got " + std::to_string(tau));
  if (filter_threshold <= 0.0 || filter_threshold >= 1.0)
    throw DataError("filter_threshold must lie in (0, 1), got " +
                    std::to_string(filter_threshold));
  if (drift_alarm < 0.0 || drift_alarm > 1.0)
    throw DataError("drift_alarm must lie in [0, 1]");
  if (prefilter <= 0) throw DataError("prefilter must be positive");
  if (rank_train_n <= 0) throw DataError("rank_train_n must be positive");
  if (rank_cutoff <= 0) throw DataError("rank_cutoff must be positive");
  if (classify_sample_per_class < 0)
    throw DataError("classify_sample_per_class must be >= 0");
  if (minority_floor < 0) throw DataError("minority_floor must be >= 0");
  if (workers < 1) throw DataError("workers must be >= 1");
  costs.validate();
}

nlohmann::json RunConfig::to_json() const {
  return json{{"query", query},
              {"table", table_path},
              {"embeddings", embeddings_path},
              {"oracle", oracle},
              {"embed", embedder},
              {"sample", sample},
              {"gate_metric", gate_metric},
              {"holdout", holdout_path},
              {"model", model_path},
              {"gold", gold_path},
              {"qrels", qrels_path},
              {"queries", queries_path},
              {"tau", tau},
              {"filter_threshold", filter_threshold},
              {"drift_alarm", drift_alarm},
              {"prefilter", prefilter},
              {"rank_train_n", rank_train_n},
              {"rank_cutoff", rank_cutoff},
              {"classify_sample_per_class", classify_sample_per_class},
              {"minority_floor", minority_floor},
              {"seed", seed},
              {"workers", workers},
              {"require_proxy", require_proxy},
              {"costs", costs.to_json()}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j,
                               const RunConfig& base) {
  if (!j.is_object()) throw DataError("config must be a JSON object");
  static const std::set<std::string> known = {
      "query",         "table",
      "embeddings",    "oracle",
      "embed",         "sample",
      "gate_metric",   "holdout",
      "model",         "gold",
      "qrels",         "queries",
      "tau",           "filter_threshold",
      "drift_alarm",   "prefilter",
      "rank_train_n",  "rank_cutoff",
      "classify_sample_per_class",
      "minority_floor", "seed",
      "workers",       "require_proxy",
      "costs",         "llm_unit",
      "embed_unit",    "vcpu_rate",
      "vcpu_flops",    "provider_latencies"};
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw DataError("unknown config key: " + key);

  RunConfig c = base;
  auto str = [&](const char* key, std::string& out) {
    if (j.contains(key)) out = j.at(key).get<std::string>();
  };
  str("query", c.query);
  str("table", c.table_path);
  str("embeddings", c.embeddings_path);
  str("oracle", c.oracle);
  str("embed", c.embedder);
  str("sample", c.sample);
  str("gate_metric", c.gate_metric);
  str("holdout", c.holdout_path);
  str("model", c.model_path);
  str("gold", c.gold_path);
  str("qrels", c.qrels_path);
  str("queries", c.queries_path);
  if (j.contains("tau")) c.tau = j.at("tau").get<double>();
  if (j.contains("filter_threshold"))
    c.filter_threshold = j.at("filter_threshold").get<double>();
  if (j.contains("drift_alarm"))
    c.drift_alarm = j.at("drift_alarm").get<double>();
  if (j.contains("prefilter")) c.prefilter = j.at("prefilter").get<int64_t>();
  if (j.contains("rank_train_n"))
    c.rank_train_n = j.at("rank_train_n").get<int64_t>();
  if (j.contains("rank_cutoff"))
    c.rank_cutoff = j.at("rank_cutoff").get<int>();
  if (j.contains("classify_sample_per_class"))
    c.classify_sample_per_class = j.at("classify_sample_per_class").get<int>();
  if (j.contains("minority_floor"))
    c.minority_floor = j.at("minority_floor").get<int>();
  if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
  if (j.contains("workers")) c.workers = j.at("workers").get<int>();
  if (j.contains("require_proxy"))
    c.require_proxy = j.at("require_proxy").get<bool>();

  // Unit costs nest under "costs" but the flat spelling works too, so a
  // config file can hold just {llm_unit, embed_unit, vcpu_rate, ...}.
  json cost_patch = j.contains("costs") ? j.at("costs") : json::object();
  for (const char* key :
       {"llm_unit", "embed_unit", "vcpu_rate", "vcpu_flops",
        "provider_latencies"})
    if (j.contains(key)) cost_patch[key] = j.at(key);
  if (!cost_patch.empty()) {
    json merged = c.costs.to_json();
    merged.update(cost_patch, /*merge_objects=*/true);
    c.costs = CostModel::from_json(merged);
  }

  c.validate();
  return c;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  return from_json(j, RunConfig{});
}

RunConfig load_config_file(const std::string& path, const RunConfig& base) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  return RunConfig::from_json(j, base);
}

RunConfig load_config_file(const std::string& path) {
  return load_config_file(path, RunConfig{});
}

}  // namespace proxyq
