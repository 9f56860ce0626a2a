#include "proxyq/oracle.hpp"

#include <algorithm>

#include "proxyq/http.hpp"
#include "json.hpp"

#include "proxyq/rng.hpp"

namespace proxyq {

using json = nlohmann::json;

OracleSpec OracleSpec::parse(const std::string& flag) {
  SpecString s = SpecString::parse(flag);
  OracleSpec spec;
  if (s.kind == "mock") {
    spec.kind = Kind::Mock;
    s.check_keys({"noise", "seed", "task", "classes", "levels", "cost",
                  "latency"},
                 "oracle");
  } else if (s.kind == "remote") {
    spec.kind = Kind::Remote;
    s.check_keys({"url", "task", "classes", "levels", "attempts", "cost",
                  "latency"},
                 "oracle");
    spec.url = s.get_str("url");
    if (spec.url.empty()) throw DataError("remote oracle needs url=");
  } else {
    throw DataError("unknown oracle \"" + s.kind +
                    "\"; expected mock or remote");
  }
  std::string task = s.get_str("task", "binary");
  if (task == "binary") {
    spec.task = OracleTask::Binary;
    spec.classes = 2;
  } else if (task == "multiclass") {
    spec.task = OracleTask::Multiclass;
    spec.classes = static_cast<int>(s.get_int("classes", 2));
  } else if (task == "relevance") {
    spec.task = OracleTask::Relevance;
    spec.classes = static_cast<int>(s.get_int("levels", 4));
  } else {
    throw DataError("unknown oracle task \"" + task + "\"");
  }
  if (spec.classes < 2) throw DataError("oracle needs at least 2 classes");
  spec.noise_rate = s.get_double("noise", 0.0);
  if (spec.noise_rate < 0 || spec.noise_rate > 1)
    throw DataError("noise must be in [0, 1]");
  spec.seed = static_cast<uint64_t>(s.get_int("seed", 42));
  spec.max_attempts = static_cast<int>(s.get_int("attempts", 3));
  if (s.has("cost")) spec.unit_cost = s.get_double("cost", 0);
  if (s.has("latency")) spec.unit_latency = s.get_double("latency", 0);
  return spec;
}

MockOracle::MockOracle(OracleSpec spec) : Oracle(std::move(spec)) {}

void MockOracle::set_gold(std::unordered_map<int64_t, int> gold) {
  gold_ = std::move(gold);
}

void MockOracle::set_qrels(
    std::unordered_map<int64_t, std::unordered_map<int64_t, int>> qrels) {
  qrels_ = std::move(qrels);
}

int MockOracle::gold_of(int64_t id) const {
  auto it = gold_.find(id);
  if (it == gold_.end())
    throw DataError("mock oracle has no gold label for id " +
                    std::to_string(id));
  return it->second;
}

int MockOracle::planted_relevance(int64_t query_id, int64_t doc_id) const {
  auto qit = qrels_.find(query_id);
  if (qit == qrels_.end())
    throw DataError("mock oracle has no judgments for query " +
                    std::to_string(query_id));
  auto dit = qit->second.find(doc_id);
  if (dit == qit->second.end())
    throw DataError("mock oracle has no judgment for query " +
                    std::to_string(query_id) + ", doc " +
                    std::to_string(doc_id));
  return dit->second;
}

int MockOracle::noisy_label(int64_t id) const {
  int g = gold_of(id);
  if (spec_.noise_rate <= 0) return g;
  Rng rng(mix64(spec_.seed ^ mix64(static_cast<uint64_t>(id) + 0x0dacul)));
  if (rng.uniform() >= spec_.noise_rate) return g;
  if (spec_.classes == 2) return 1 - g;
  // Uniform over the other classes.
  int shift = 1 + static_cast<int>(rng.uniform_int(
                      static_cast<uint64_t>(spec_.classes - 1)));
  return (g + shift) % spec_.classes;
}

int MockOracle::noisy_relevance(int64_t query_id, int64_t doc_id) const {
  int g = planted_relevance(query_id, doc_id);
  if (spec_.noise_rate <= 0) return g;
  Rng rng(mix64(spec_.seed ^
                hash_combine(static_cast<uint64_t>(query_id),
                             static_cast<uint64_t>(doc_id))));
  if (rng.uniform() >= spec_.noise_rate) return g;
  int level = g + (rng.uniform() < 0.5 ? -1 : 1);
  return std::clamp(level, 0, spec_.classes - 1);
}

OracleBatchResult MockOracle::label_batch(const std::string&,
                                          const std::vector<int64_t>& ids,
                                          const std::vector<std::string>&,
                                          bool fallback, CostLedger& ledger) {
  OracleBatchResult out;
  out.labels.reserve(ids.size());
  for (int64_t id : ids) out.labels.push_back({id, noisy_label(id)});
  ledger.add_oracle(ids.size(), fallback);
  return out;
}

OracleBatchResult MockOracle::label_relevance_batch(
    const std::string&, int64_t query_id, const std::vector<int64_t>& doc_ids,
    const std::vector<std::string>&, bool fallback, CostLedger& ledger) {
  OracleBatchResult out;
  out.labels.reserve(doc_ids.size());
  for (int64_t did : doc_ids)
    out.labels.push_back({did, noisy_relevance(query_id, did)});
  ledger.add_oracle(doc_ids.size(), fallback);
  return out;
}

RemoteOracle::RemoteOracle(OracleSpec spec) : Oracle(std::move(spec)) {
  size_t scheme = spec_.url.find("://");
  if (scheme == std::string::npos)
    throw DataError("oracle url must include scheme: " + spec_.url);
  size_t slash = spec_.url.find('/', scheme + 3);
  if (slash == std::string::npos) {
    host_ = spec_.url;
    path_ = "/";
  } else {
    host_ = spec_.url.substr(0, slash);
    path_ = spec_.url.substr(slash);
  }
}

OracleBatchResult RemoteOracle::post(const std::string& prompt,
                                     const std::vector<int64_t>& ids,
                                     const std::vector<std::string>& texts,
                                     bool fallback, CostLedger& ledger) {
  if (texts.size() != ids.size())
    throw DataError("oracle batch ids/texts size mismatch");
  json req;
  req["prompt"] = prompt;
  json items = json::array();
  for (size_t i = 0; i < ids.size(); ++i)
    items.push_back({{"id", ids[i]}, {"text", texts[i]}});
  req["items"] = std::move(items);
  std::string body = req.dump();

  std::string last_err;
  for (int attempt = 0; attempt < spec_.max_attempts; ++attempt) {
    httplib::Client cli(host_);
    cli.set_read_timeout(60, 0);
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
      throw TransportError("oracle returned invalid JSON: " +
                           std::string(e.what()));
    }
    if (!resp.contains("labels") || !resp.at("labels").is_array())
      throw TransportError("oracle response missing labels array");

    std::unordered_map<int64_t, int> by_id;
    for (const json& lab : resp.at("labels")) {
      if (!lab.is_object() || !lab.contains("id") || !lab.contains("value"))
        continue;
      const json& jid = lab.at("id");
      const json& jval = lab.at("value");
      if (!jid.is_number_integer() && !jid.is_number_unsigned()) continue;
      if (!jval.is_number_integer() && !jval.is_number_unsigned()) continue;
      int v = jval.get<int>();
      if (v < 0 || v >= spec_.classes) continue;
      by_id[jid.get<int64_t>()] = v;
    }
    OracleBatchResult out;
    for (int64_t id : ids) {
      auto it = by_id.find(id);
      if (it == by_id.end())
        ++out.excluded;  // unlabeled row, caller warns and skips it
      else
        out.labels.push_back({id, it->second});
    }
    ledger.add_oracle(ids.size(), fallback);
    return out;
  }
  throw TransportError("oracle request failed after " +
                       std::to_string(spec_.max_attempts) + " attempts: " +
                       last_err);
}

OracleBatchResult RemoteOracle::label_batch(const std::string& prompt,
                                            const std::vector<int64_t>& ids,
                                            const std::vector<std::string>& texts,
                                            bool fallback, CostLedger& ledger) {
  return post(prompt, ids, texts, fallback, ledger);
}

OracleBatchResult RemoteOracle::label_relevance_batch(
    const std::string& prompt, int64_t query_id,
    const std::vector<int64_t>& doc_ids,
    const std::vector<std::string>& doc_texts, bool fallback,
    CostLedger& ledger) {
  return post(prompt + " [query " + std::to_string(query_id) + "]", doc_ids,
              doc_texts, fallback, ledger);
}

std::unique_ptr<Oracle> make_oracle(const OracleSpec& spec) {
  if (spec.kind == OracleSpec::Kind::Mock)
    return std::make_unique<MockOracle>(spec);
  return std::make_unique<RemoteOracle>(spec);
}

}  // namespace proxyq
