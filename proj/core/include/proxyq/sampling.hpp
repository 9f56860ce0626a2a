#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "proxyq/dataset.hpp"
#include "proxyq/ledger.hpp"
#include "proxyq/model.hpp"
#include "proxyq/oracle.hpp"

namespace proxyq {

enum class SampleStrategy { Random, TopK, Active };

struct SamplePlan {
  SampleStrategy strategy = SampleStrategy::Random;
  int64_t n = 1000;
  uint64_t seed = 42;
  int64_t batch = 50;  // active-learning round size
  int64_t k = 500;     // topk candidate pool

  // "random:n=1000,seed=42" | "active:n=1000,batch=50,seed=42" | "topk:k=500"
  static SamplePlan parse(const std::string& flag);
};

// Uniform without replacement; the id order is the draw order.
// n == pool size yields a permutation of the pool.
std::vector<int64_t> sample_random(const std::vector<int64_t>& pool,
                                   int64_t n, uint64_t seed,
                                   CostLedger* ledger = nullptr);
std::vector<int64_t> sample_random(const Table& table, int64_t n,
                                   uint64_t seed,
                                   CostLedger* ledger = nullptr);

// The k ids with the largest dot product against query_vec, similarity
// descending, ties broken by ascending id. A pool restricts candidates
// to a subset of the store's ids.
std::vector<int64_t> sample_topk(const std::vector<float>& query_vec,
                                 const EmbeddingStore& store, int64_t k,
                                 CostLedger* ledger = nullptr,
                                 const std::vector<int64_t>* pool = nullptr);

struct ActiveResult {
  LabeledSample sample;     // labeling order preserved
  bool aborted = false;     // oracle transport failure mid-round
  bool single_class = false;
  int rounds = 0;
  int excluded = 0;         // oracle rows dropped as unparseable
};

// Round 1 labels a random batch. Every later round refits an interim
// model from scratch on all labels so far, scores the unlabeled rows,
// and labels the batch with the highest predicted minority-class
// probability. Minority is recomputed each round from current counts
// (ties toward the smaller class id). Oracle calls total exactly n
// unless a transport failure aborts the run early.
ActiveResult sample_active(const Table& table, const EmbeddingStore& store,
                           Oracle& oracle, const std::string& prompt,
                           const std::string& text_column, int64_t n,
                           int64_t batch, uint64_t seed, CostLedger& ledger,
                           const FitOptions& fit_opts = {},
                           const std::vector<int64_t>* pool = nullptr);

}  // namespace proxyq
