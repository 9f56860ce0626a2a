#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "proxyq/dataset.hpp"
#include "proxyq/ledger.hpp"
#include "proxyq/specstr.hpp"

namespace proxyq {

inline constexpr int kMockMaxDim = 768;

struct EmbedProviderSpec {
  enum class Kind { Mock, Remote };
  Kind kind = Kind::Mock;
  int dim = 768;        // mock supports up to kMockMaxDim
  int batch_size = 20;  // texts per provider request
  uint64_t seed = 42;
  std::string url;  // remote only
  int max_attempts = 3;
  std::optional<double> unit_cost;     // per text; overrides CostModel
  std::optional<double> unit_latency;  // per text; overrides CostModel

  // "mock:dim=768,seed=42" or "remote:url=http://host:port/embed"
  static EmbedProviderSpec parse(const std::string& flag);
  std::string to_string() const;
};

class Embedder {
 public:
  explicit Embedder(EmbedProviderSpec spec) : spec_(std::move(spec)) {}
  virtual ~Embedder() = default;

  const EmbedProviderSpec& spec() const { return spec_; }
  int dim() const { return spec_.dim; }

  // Order-preserving; splits into batch_size chunks; consults the
  // cache first. Rejects empty or whitespace-only texts.
  MatRXf embed_batch(const std::vector<std::string>& texts,
                     CostLedger& ledger);

  size_t cache_size() const;

 protected:
  // One provider request for up to batch_size texts.
  virtual void embed_chunk(const std::vector<std::string>& texts,
                           MatRXf& out, Eigen::Index first_row,
                           CostLedger& ledger) = 0;

  EmbedProviderSpec spec_;

 private:
  mutable std::mutex cache_mu_;
  std::unordered_map<std::string, std::vector<float>> cache_;
};

class MockEmbedder : public Embedder {
 public:
  explicit MockEmbedder(EmbedProviderSpec spec);

  // Bag of hashed tokens plus a seeded direction per token, so texts
  // sharing keywords cluster; unit-normalized.
  Eigen::VectorXf embed_one(const std::string& text) const;

 protected:
  void embed_chunk(const std::vector<std::string>& texts, MatRXf& out,
                   Eigen::Index first_row, CostLedger& ledger) override;

 private:
  const Eigen::VectorXf& token_direction(uint64_t token_hash) const;

  mutable std::mutex dir_mu_;
  mutable std::unordered_map<uint64_t, Eigen::VectorXf> dirs_;
};

class RemoteEmbedder : public Embedder {
 public:
  explicit RemoteEmbedder(EmbedProviderSpec spec);

 protected:
  void embed_chunk(const std::vector<std::string>& texts, MatRXf& out,
                   Eigen::Index first_row, CostLedger& ledger) override;

 private:
  std::string host_;  // scheme://host:port
  std::string path_;
};

std::unique_ptr<Embedder> make_embedder(const EmbedProviderSpec& spec);

// First d coordinates, re-normalized to unit norm.
Eigen::VectorXf truncate_mrl(const Eigen::VectorXf& vec, int d);

std::vector<std::string> tokenize_text(const std::string& text);

}  // namespace proxyq
