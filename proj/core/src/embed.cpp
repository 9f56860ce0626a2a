#include "proxyq/embed.hpp"

#include <cctype>
#include <cmath>

#include "proxyq/http.hpp"
#include "json.hpp"

#include "proxyq/rng.hpp"

namespace proxyq {

using json = nlohmann::json;

EmbedProviderSpec EmbedProviderSpec::parse(const std::string& flag) {
  SpecString s = SpecString::parse(flag);
  EmbedProviderSpec spec;
  if (s.kind == "mock") {
    spec.kind = Kind::Mock;
    s.check_keys({"dim", "seed", "batch", "cost", "latency"}, "embed");
  } else if (s.kind == "remote") {
    spec.kind = Kind::Remote;
    s.check_keys({"url", "dim", "batch", "attempts", "cost", "latency"},
                 "embed");
    spec.url = s.get_str("url");
    if (spec.url.empty()) throw DataError("remote embedder needs url=");
  } else {
    throw DataError("unknown embed provider \"" + s.kind +
                    "\"; expected mock or remote");
  }
  spec.dim = static_cast<int>(s.get_int("dim", spec.dim));
  spec.batch_size = static_cast<int>(s.get_int("batch", spec.batch_size));
  spec.seed = static_cast<uint64_t>(s.get_int("seed", 42));
  spec.max_attempts = static_cast<int>(s.get_int("attempts", 3));
  if (s.has("cost")) spec.unit_cost = s.get_double("cost", 0);
  if (s.has("latency")) spec.unit_latency = s.get_double("latency", 0);
  if (spec.dim <= 0) throw DataError("embed dim must be positive");
  if (spec.kind == Kind::Mock && spec.dim > kMockMaxDim)
    throw DataError("mock embedder supports dim up to " +
                    std::to_string(kMockMaxDim));
  if (spec.batch_size <= 0) throw DataError("embed batch must be positive");
  return spec;
}

std::string EmbedProviderSpec::to_string() const {
  if (kind == Kind::Mock)
    return "mock:dim=" + std::to_string(dim) +
           ",seed=" + std::to_string(seed) +
           ",batch=" + std::to_string(batch_size);
  return "remote:url=" + url + ",batch=" + std::to_string(batch_size);
}

std::vector<std::string> tokenize_text(const std::string& text) {
  std::vector<std::string> toks;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!cur.empty()) {
      toks.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) toks.push_back(std::move(cur));
  return toks;
}

size_t Embedder::cache_size() const {
  std::lock_guard lock(cache_mu_);
  return cache_.size();
}

MatRXf Embedder::embed_batch(const std::vector<std::string>& texts,
                             CostLedger& ledger) {
  MatRXf out(static_cast<Eigen::Index>(texts.size()), spec_.dim);
  std::vector<size_t> miss_rows;
  uint64_t hits = 0;
  {
    std::lock_guard lock(cache_mu_);
    for (size_t i = 0; i < texts.size(); ++i) {
      if (texts[i].find_first_not_of(" \t\n\r") == std::string::npos)
        throw DataError("cannot embed empty text");
      auto it = cache_.find(texts[i]);
      if (it == cache_.end()) {
        miss_rows.push_back(i);
      } else {
        for (int j = 0; j < spec_.dim; ++j)
          out(static_cast<Eigen::Index>(i), j) = it->second[j];
        ++hits;
      }
    }
  }
  if (hits) ledger.add_cache_hits(hits);

  std::vector<std::string> chunk;
  MatRXf chunk_out(0, spec_.dim);
  for (size_t start = 0; start < miss_rows.size();
       start += static_cast<size_t>(spec_.batch_size)) {
    size_t stop =
        std::min(miss_rows.size(), start + static_cast<size_t>(spec_.batch_size));
    chunk.clear();
    for (size_t k = start; k < stop; ++k) chunk.push_back(texts[miss_rows[k]]);
    chunk_out.resize(static_cast<Eigen::Index>(chunk.size()), spec_.dim);
    embed_chunk(chunk, chunk_out, 0, ledger);
    {
      std::lock_guard lock(cache_mu_);
      for (size_t k = start; k < stop; ++k) {
        Eigen::Index row = static_cast<Eigen::Index>(k - start);
        out.row(static_cast<Eigen::Index>(miss_rows[k])) = chunk_out.row(row);
        auto& slot = cache_[texts[miss_rows[k]]];
        slot.assign(chunk_out.row(row).data(),
                    chunk_out.row(row).data() + spec_.dim);
      }
    }
  }
  return out;
}

MockEmbedder::MockEmbedder(EmbedProviderSpec spec) : Embedder(std::move(spec)) {}

const Eigen::VectorXf& MockEmbedder::token_direction(uint64_t token_hash) const {
  std::lock_guard lock(dir_mu_);
  auto it = dirs_.find(token_hash);
  if (it != dirs_.end()) return it->second;
  Rng rng(mix64(token_hash ^ mix64(spec_.seed + 0x5eedu)));
  Eigen::VectorXf d(spec_.dim);
  float scale = 1.0f / std::sqrt(static_cast<float>(spec_.dim));
  for (int j = 0; j < spec_.dim; ++j)
    d[j] = static_cast<float>(rng.normal()) * scale;
  return dirs_.emplace(token_hash, std::move(d)).first->second;
}

Eigen::VectorXf MockEmbedder::embed_one(const std::string& text) const {
  std::vector<std::string> toks = tokenize_text(text);
  if (toks.empty()) toks.push_back(text);  // symbols-only text

  Eigen::VectorXf acc = Eigen::VectorXf::Zero(spec_.dim);
  for (const std::string& tok : toks) {
    uint64_t th = hash_str(tok);
    uint64_t h = mix64(th ^ spec_.seed);
    int bucket = static_cast<int>(h % static_cast<uint64_t>(spec_.dim));
    float sign = ((h >> 32) & 1u) ? 1.0f : -1.0f;
    acc[bucket] += sign;
    acc += token_direction(th);
  }
  float norm = acc.norm();
  if (norm < 1e-12f)
    throw DataError("degenerate mock embedding for text: " + text);
  return acc / norm;
}

void MockEmbedder::embed_chunk(const std::vector<std::string>& texts,
                               MatRXf& out, Eigen::Index first_row,
                               CostLedger& ledger) {
  double flops = 0;
  for (size_t i = 0; i < texts.size(); ++i) {
    Eigen::VectorXf v = embed_one(texts[i]);
    out.row(first_row + static_cast<Eigen::Index>(i)) = v.transpose();
    flops += 4.0 * static_cast<double>(spec_.dim);
  }
  ledger.add_embed(1, texts.size(), flops);
}

RemoteEmbedder::RemoteEmbedder(EmbedProviderSpec spec)
    : Embedder(std::move(spec)) {
  size_t scheme = spec_.url.find("://");
  if (scheme == std::string::npos)
    throw DataError("embed url must include scheme: " + spec_.url);
  size_t slash = spec_.url.find('/', scheme + 3);
  if (slash == std::string::npos) {
    host_ = spec_.url;
    path_ = "/";
  } else {
    host_ = spec_.url.substr(0, slash);
    path_ = spec_.url.substr(slash);
  }
}

void RemoteEmbedder::embed_chunk(const std::vector<std::string>& texts,
                                 MatRXf& out, Eigen::Index first_row,
                                 CostLedger& ledger) {
  json req;
  req["texts"] = texts;
  std::string body = req.dump();

  std::string last_err;
  for (int attempt = 0; attempt < spec_.max_attempts; ++attempt) {
    httplib::Client cli(host_);
    cli.set_read_timeout(30, 0);
    auto res = cli.Post(path_, body, "application/json");
    if (!res) {
      last_err = "transport error " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_err = "http status " + std::to_string(res->status);
      continue;
    }
    json resp;
    try {
      resp = json::parse(res->body);
    } catch (const json::exception& e) {
      throw TransportError("embed endpoint returned invalid JSON: " +
                           std::string(e.what()));
    }
    if (!resp.contains("vectors") || !resp.at("vectors").is_array() ||
        resp.at("vectors").size() != texts.size())
      throw TransportError("embed endpoint returned wrong vector count");
    for (size_t i = 0; i < texts.size(); ++i) {
      const json& jv = resp.at("vectors")[i];
      if (!jv.is_array() || static_cast<int>(jv.size()) != spec_.dim)
        throw TransportError("embed endpoint returned dim " +
                             std::to_string(jv.size()) + ", expected " +
                             std::to_string(spec_.dim));
      Eigen::VectorXf v(spec_.dim);
      for (int j = 0; j < spec_.dim; ++j) {
        double d = jv[j].get<double>();
        if (!std::isfinite(d))
          throw TransportError("embed endpoint returned non-finite entry");
        v[j] = static_cast<float>(d);
      }
      float norm = v.norm();
      if (norm < 1e-12f)
        throw TransportError("embed endpoint returned a zero vector");
      out.row(first_row + static_cast<Eigen::Index>(i)) =
          (v / norm).transpose();
    }
    ledger.add_embed(1, texts.size(), 0);
    return;
  }
  throw TransportError("embed request failed after " +
                       std::to_string(spec_.max_attempts) + " attempts: " +
                       last_err);
}

std::unique_ptr<Embedder> make_embedder(const EmbedProviderSpec& spec) {
  if (spec.kind == EmbedProviderSpec::Kind::Mock)
    return std::make_unique<MockEmbedder>(spec);
  return std::make_unique<RemoteEmbedder>(spec);
}

Eigen::VectorXf truncate_mrl(const Eigen::VectorXf& vec, int d) {
  if (d <= 0 || d > vec.size())
    throw DataError("truncation dim " + std::to_string(d) +
                    " out of range [1, " + std::to_string(vec.size()) + "]");
  Eigen::VectorXf head = vec.head(d);
  float norm = head.norm();
  if (norm < 1e-12f) throw DataError("truncated prefix has zero norm");
  return head / norm;
}

}  // namespace proxyq
