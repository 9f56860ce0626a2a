#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "proxyq/config.hpp"
#include "proxyq/dataset.hpp"
#include "proxyq/embed.hpp"
#include "proxyq/frontend.hpp"
#include "proxyq/gate.hpp"
#include "proxyq/ledger.hpp"
#include "proxyq/model.hpp"
#include "proxyq/oracle.hpp"
#include "proxyq/synth.hpp"

namespace proxyq {

struct Providers {
  Oracle* oracle = nullptr;
  Embedder* embedder = nullptr;
  // Vectors served from here first; rows missing from it are embedded.
  const EmbeddingStore* precomputed = nullptr;
};

enum class LabelSource { Oracle, Proxy };

std::string to_string(LabelSource s);

struct RankEntry {
  int64_t doc_id = 0;
  double score = 0.0;  // oracle level or proxy expected level
  LabelSource source = LabelSource::Proxy;
};

struct RankedList {
  int64_t query_id = 0;
  std::vector<RankEntry> entries;  // score descending, ids unique
  int cutoff = 10;

  nlohmann::json to_json() const;
};

// Everything a run emits: routing decisions, the bill, one label per
// surviving row (or one ranking per query), and optional quality
// figures against planted labels. Serialization is canonical, so equal
// runs produce byte-identical JSON.
struct ExecutionReport {
  LogicalPlan plan;
  RunConfig config;
  std::vector<SelectionDecision> decisions;  // per IF op, or per query
  bool fallback = false;                     // any decision routed to llm
  CostLedger ledger;
  LedgerTotals totals;
  uint64_t n_rows = 0;  // rows a pure-LLM plan would label
  std::map<int64_t, int> outputs;
  std::vector<RankedList> rankings;
  nlohmann::json quality = nlohmann::json::object();
  std::vector<std::string> notes;

  nlohmann::json to_json() const;
  std::string to_json_text() const;  // dump(2) + newline
};

// Filter pipeline: relational predicates, then each AI.IF op in turn on
// the survivors of the previous one. Per op: resolve embeddings, draw
// the sample, label it, fit, gate, then proxy-predict or fall back to
// labeling every remaining row. Outputs map every relational survivor
// to 1 (passed all ops) or 0.
ExecutionReport run_filter(const LogicalPlan& plan, const Table& table,
                           Providers& providers, const RunConfig& config);

// Same pipeline with the declared categories as classes; outputs map
// rows to category indices.
ExecutionReport run_classify(const LogicalPlan& plan, const Table& table,
                             Providers& providers, const RunConfig& config);

// Per query: top-k prefilter by embedding, label a random training
// subset, fit over relevance levels, gate on ndcg10, then score the
// rest with expected level or fall back. Emits one RankedList per
// query, cut to the plan's LIMIT.
ExecutionReport run_rank(const LogicalPlan& plan,
                         const std::vector<SynthQuery>& queries,
                         const Table& corpus, Providers& providers,
                         const RunConfig& config);

// Sample, label, fit, gate, and save the model to config.model_path;
// no prediction stage runs.
ExecutionReport train_offline(const LogicalPlan& plan, const Table& table,
                              Providers& providers, const RunConfig& config);

// Load the model from config.model_path and run the filter/classify
// predict stage directly. With a holdout file the gate re-checks the
// stored model and can force fallback; agreement drop beyond
// config.drift_alarm flags retraining.
ExecutionReport run_offline(const LogicalPlan& plan, const Table& table,
                            Providers& providers, const RunConfig& config);

}  // namespace proxyq
