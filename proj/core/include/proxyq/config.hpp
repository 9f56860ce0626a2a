#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"

#include "proxyq/ledger.hpp"
#include "proxyq/version.hpp"

namespace proxyq {

// Merged view of CLI flags and config-file keys. The whole struct is
// embedded in every report so a run can be replayed from its output.
struct RunConfig {
  std::string query;
  std::string table_path;
  std::string embeddings_path;  // empty: embed texts on the fly
  std::string oracle = "mock:seed=42";
  std::string embedder = "mock:dim=64,seed=42";
  std::string sample = "random:n=1000,seed=42";
  std::string gate_metric;   // empty: per-op default
  std::string holdout_path;  // labeled rows the gate evaluates on
  std::string model_path;    // offline model, in or out
  std::string gold_path;     // planted labels for the mock oracle
  std::string qrels_path;    // planted judgments, rank runs
  std::string queries_path;  // query rows, rank runs
  double tau = 0.1;          // gate threshold t
  double filter_threshold = 0.5;
  double drift_alarm = 0.0;  // 0 disables the stale-model check
  int64_t prefilter = 500;   // rank: top-k candidate pool per query
  int64_t rank_train_n = 200;
  int rank_cutoff = 10;  // LIMIT on the query wins when present
  int classify_sample_per_class = 0;  // 0: no per-class sample scaling
  int minority_floor = 100;
  uint64_t seed = 42;
  int workers = 1;
  bool require_proxy = false;
  CostModel costs;

  void validate() const;
  nlohmann::json to_json() const;
  // Keys the JSON leaves out keep their value from `base`.
  static RunConfig from_json(const nlohmann::json& j, const RunConfig& base);
  static RunConfig from_json(const nlohmann::json& j);
};

RunConfig load_config_file(const std::string& path, const RunConfig& base);
RunConfig load_config_file(const std::string& path);

}  // namespace proxyq
