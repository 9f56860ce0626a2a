#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "proxyq/dataset.hpp"

namespace proxyq {

enum class SynthMode { Filter, Classify, Rank };

struct SynthSpec {
  int64_t n_rows = 0;
  int n_classes = 2;
  double imbalance_ratio = 1.0;    // majority count / minority count
  double cluster_separation = 4.0; // pairwise centroid distance
  int dim = 32;
  double oracle_noise = 0.0;       // carried into run setup, not baked in
  uint64_t seed = 42;
  SynthMode mode = SynthMode::Filter;

  // rank mode
  int levels = 4;            // relevance grades 0..levels-1
  int relevant_per_query = 10;
  int64_t corpus_size = 0;   // 0 means n_rows
  int n_queries = 20;
};

struct SynthQuery {
  int64_t id = 0;
  std::string text;
  std::vector<float> embedding;
};

struct SynthData {
  Table table;
  EmbeddingStore embeddings;
  std::vector<int> gold;                            // filter/classify, by row
  std::vector<SynthQuery> queries;                  // rank only
  std::map<int64_t, std::map<int64_t, int>> qrels;  // query -> doc -> level
};

// Largest-remainder apportionment of `total` across `weights`; ties go
// to the lower index.
std::vector<int64_t> apportion_largest_remainder(
    int64_t total, const std::vector<double>& weights);

// Gaussian class clusters with unit within-class variance per axis,
// centroids at pairwise distance cluster_separation, class sizes from
// the imbalance ratio, texts drawn from per-class keyword pools. Rank
// mode instead plants relevant_per_query docs per query at graded
// levels along a per-query direction. Fully seeded.
SynthData generate_synth(const SynthSpec& spec);

std::string serialize_gold(const SynthData& d);
std::string serialize_qrels(const SynthData& d);
std::string serialize_queries(const SynthData& d);

// Reads {"id", "label"} JSONL into a map.
std::map<int64_t, int> load_gold(const std::string& path);
// Reads {"query_id", "doc_id", "level"} JSONL.
std::map<int64_t, std::map<int64_t, int>> load_qrels(const std::string& path);
// Reads {"id", "text", "vec"} JSONL; "vec" may be absent.
std::vector<SynthQuery> load_queries(const std::string& path);

}  // namespace proxyq
