#pragma once

#include <cstdint>
#include <mutex>

#include "json.hpp"

#include "proxyq/errors.hpp"

namespace proxyq {

// Unit costs and the simulated latency model. Costs are in "LLM call"
// units by default (one labeled item = 1.0); latencies in seconds.
// Local compute is charged through a flop budget so that reports stay
// byte-identical across machines.
struct CostModel {
  double llm_unit = 1.0;             // cost per oracle-labeled item
  double embed_unit = 1.0 / 3.0;     // cost per embedded text
  double vcpu_rate = 0.01;           // cost per simulated vcpu-second
  double vcpu_flops = 1e9;           // flops per simulated vcpu-second
  double llm_unit_latency = 0.5;     // seconds per oracle-labeled item
  double embed_unit_latency = 0.05;  // seconds per embedded text

  void validate() const;
  static CostModel from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// Counts every provider call and simulated flop of a pipeline run.
// Adders are thread-safe; the struct is copyable for report snapshots.
class CostLedger {
 public:
  CostLedger() = default;
  CostLedger(const CostLedger& o);
  CostLedger& operator=(const CostLedger& o);

  void add_embed(uint64_t requests, uint64_t texts, double flops);
  void add_cache_hits(uint64_t n);
  void add_oracle(uint64_t items, bool fallback);
  void add_proxy_predictions(uint64_t n, double flops);
  // Interim proxy scoring inside active-learning rounds; charged to
  // the sample stage, never to proxy_predictions.
  void add_interim_scores(uint64_t n, double flops);
  void add_sample_flops(double f);
  void add_train_flops(double f);

  uint64_t embed_calls() const { return embed_calls_; }
  uint64_t embed_texts() const { return embed_texts_; }
  uint64_t cache_hits() const { return cache_hits_; }
  uint64_t oracle_requests() const { return oracle_requests_; }
  uint64_t oracle_label_calls() const { return oracle_label_calls_; }
  uint64_t oracle_fallback_calls() const { return oracle_fallback_calls_; }
  uint64_t proxy_predictions() const { return proxy_predictions_; }
  uint64_t al_interim_scores() const { return al_interim_scores_; }
  double sample_flops() const { return sample_flops_; }
  double train_flops() const { return train_flops_; }
  double predict_flops() const { return predict_flops_; }
  double embed_flops() const { return embed_flops_; }

  nlohmann::json counts_json() const;

 private:
  mutable std::mutex mu_;
  uint64_t embed_calls_ = 0;
  uint64_t embed_texts_ = 0;
  uint64_t cache_hits_ = 0;
  uint64_t oracle_requests_ = 0;
  uint64_t oracle_label_calls_ = 0;
  uint64_t oracle_fallback_calls_ = 0;
  uint64_t proxy_predictions_ = 0;
  uint64_t al_interim_scores_ = 0;
  double sample_flops_ = 0;
  double train_flops_ = 0;
  double predict_flops_ = 0;
  double embed_flops_ = 0;
};

struct LedgerTotals {
  double stage_embed = 0;
  double stage_sample = 0;
  double stage_label = 0;
  double stage_train = 0;
  double stage_predict = 0;
  double latency_proxy_path = 0;
  double latency_llm_baseline = 0;
  double cost_proxy_path = 0;
  double cost_llm_baseline = 0;
  double savings_multiplier = 0;
  double latency_multiplier = 0;

  nlohmann::json to_json() const;
};

// n_rows is the row count a pure-LLM plan would label. Embed, label,
// and predict stages divide across workers; sample and train are
// sequential barriers.
LedgerTotals ledger_report(const CostLedger& ledger, const CostModel& m,
                           uint64_t n_rows, int workers);

}  // namespace proxyq
