#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "proxyq/ledger.hpp"
#include "proxyq/specstr.hpp"

namespace proxyq {

enum class OracleTask { Binary, Multiclass, Relevance };

struct OracleSpec {
  enum class Kind { Mock, Remote };
  Kind kind = Kind::Mock;
  OracleTask task = OracleTask::Binary;
  int classes = 2;  // class count, or rubric levels for relevance
  double noise_rate = 0.0;
  uint64_t seed = 42;
  std::string url;
  int max_attempts = 3;
  std::optional<double> unit_cost;     // per item; overrides CostModel
  std::optional<double> unit_latency;  // per item; overrides CostModel

  // "mock:noise=0.02,seed=42" or "remote:url=http://host:port/label"
  static OracleSpec parse(const std::string& flag);
};

struct LabeledRow {
  int64_t id = 0;
  int value = 0;
};

struct OracleBatchResult {
  std::vector<LabeledRow> labels;  // same order as the submitted ids
  int excluded = 0;                // rows dropped on unparseable output
};

// Labels are billed per item; `fallback` routes the count to the
// fallback counter so training labels and fallback labels stay
// separable in reports.
class Oracle {
 public:
  explicit Oracle(OracleSpec spec) : spec_(std::move(spec)) {}
  virtual ~Oracle() = default;

  const OracleSpec& spec() const { return spec_; }

  virtual OracleBatchResult label_batch(const std::string& prompt,
                                        const std::vector<int64_t>& ids,
                                        const std::vector<std::string>& texts,
                                        bool fallback,
                                        CostLedger& ledger) = 0;

  // Relevance labeling keyed by (query, doc); query_id selects the
  // planted judgment set in the mock.
  virtual OracleBatchResult label_relevance_batch(
      const std::string& prompt, int64_t query_id,
      const std::vector<int64_t>& doc_ids,
      const std::vector<std::string>& doc_texts, bool fallback,
      CostLedger& ledger) = 0;

 protected:
  OracleSpec spec_;
};

// Deterministic test oracle: planted gold labels flipped i.i.d. with
// probability noise_rate, keyed by (seed, id) so that relabeling any
// row reproduces the identical answer.
class MockOracle : public Oracle {
 public:
  explicit MockOracle(OracleSpec spec);

  void set_gold(std::unordered_map<int64_t, int> gold);
  // Judgments per (query_id, doc_id).
  void set_qrels(
      std::unordered_map<int64_t, std::unordered_map<int64_t, int>> qrels);

  OracleBatchResult label_batch(const std::string& prompt,
                                const std::vector<int64_t>& ids,
                                const std::vector<std::string>& texts,
                                bool fallback, CostLedger& ledger) override;

  OracleBatchResult label_relevance_batch(
      const std::string& prompt, int64_t query_id,
      const std::vector<int64_t>& doc_ids,
      const std::vector<std::string>& doc_texts, bool fallback,
      CostLedger& ledger) override;

  int gold_of(int64_t id) const;
  int planted_relevance(int64_t query_id, int64_t doc_id) const;
  // The label the mock would emit, noise included; pure in (seed, id).
  int noisy_label(int64_t id) const;
  int noisy_relevance(int64_t query_id, int64_t doc_id) const;

 private:
  std::unordered_map<int64_t, int> gold_;
  std::unordered_map<int64_t, std::unordered_map<int64_t, int>> qrels_;
};

class RemoteOracle : public Oracle {
 public:
  explicit RemoteOracle(OracleSpec spec);

  OracleBatchResult label_batch(const std::string& prompt,
                                const std::vector<int64_t>& ids,
                                const std::vector<std::string>& texts,
                                bool fallback, CostLedger& ledger) override;

  OracleBatchResult label_relevance_batch(
      const std::string& prompt, int64_t query_id,
      const std::vector<int64_t>& doc_ids,
      const std::vector<std::string>& doc_texts, bool fallback,
      CostLedger& ledger) override;

 private:
  OracleBatchResult post(const std::string& prompt,
                         const std::vector<int64_t>& ids,
                         const std::vector<std::string>& texts, bool fallback,
                         CostLedger& ledger);

  std::string host_;
  std::string path_;
};

std::unique_ptr<Oracle> make_oracle(const OracleSpec& spec);

}  // namespace proxyq
