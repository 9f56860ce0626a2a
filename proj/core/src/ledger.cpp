#include "proxyq/ledger.hpp"

namespace proxyq {

using json = nlohmann::json;

void CostModel::validate() const {
  if (llm_unit <= 0) throw DataError("llm_unit must be positive");
  if (embed_unit <= 0) throw DataError("embed_unit must be positive");
  if (vcpu_flops <= 0) throw DataError("vcpu_flops must be positive");
  if (vcpu_rate < 0) throw DataError("vcpu_rate must be nonnegative");
  if (llm_unit_latency < 0 || embed_unit_latency < 0)
    throw DataError("unit latencies must be nonnegative");
}

CostModel CostModel::from_json(const json& j) {
  CostModel m;
  if (j.contains("llm_unit")) m.llm_unit = j.at("llm_unit").get<double>();
  if (j.contains("embed_unit")) m.embed_unit = j.at("embed_unit").get<double>();
  if (j.contains("vcpu_rate")) m.vcpu_rate = j.at("vcpu_rate").get<double>();
  if (j.contains("vcpu_flops")) m.vcpu_flops = j.at("vcpu_flops").get<double>();
  if (j.contains("provider_latencies")) {
    const json& p = j.at("provider_latencies");
    if (p.contains("llm_unit_latency"))
      m.llm_unit_latency = p.at("llm_unit_latency").get<double>();
    if (p.contains("embed_unit_latency"))
      m.embed_unit_latency = p.at("embed_unit_latency").get<double>();
  }
  m.validate();
  return m;
}

json CostModel::to_json() const {
  return json{{"llm_unit", llm_unit},
              {"embed_unit", embed_unit},
              {"vcpu_rate", vcpu_rate},
              {"vcpu_flops", vcpu_flops},
              {"provider_latencies",
               json{{"llm_unit_latency", llm_unit_latency},
                    {"embed_unit_latency", embed_unit_latency}}}};
}

CostLedger::CostLedger(const CostLedger& o) { *this = o; }

CostLedger& CostLedger::operator=(const CostLedger& o) {
  if (this == &o) return *this;
  std::scoped_lock lock(mu_, o.mu_);
  embed_calls_ = o.embed_calls_;
  embed_texts_ = o.embed_texts_;
  cache_hits_ = o.cache_hits_;
  oracle_requests_ = o.oracle_requests_;
  oracle_label_calls_ = o.oracle_label_calls_;
  oracle_fallback_calls_ = o.oracle_fallback_calls_;
  proxy_predictions_ = o.proxy_predictions_;
  al_interim_scores_ = o.al_interim_scores_;
  sample_flops_ = o.sample_flops_;
  train_flops_ = o.train_flops_;
  predict_flops_ = o.predict_flops_;
  embed_flops_ = o.embed_flops_;
  return *this;
}

void CostLedger::add_embed(uint64_t requests, uint64_t texts, double flops) {
  std::lock_guard lock(mu_);
  embed_calls_ += requests;
  embed_texts_ += texts;
  embed_flops_ += flops;
}

void CostLedger::add_cache_hits(uint64_t n) {
  std::lock_guard lock(mu_);
  cache_hits_ += n;
}

void CostLedger::add_oracle(uint64_t items, bool fallback) {
  std::lock_guard lock(mu_);
  oracle_requests_ += 1;
  if (fallback)
    oracle_fallback_calls_ += items;
  else
    oracle_label_calls_ += items;
}

void CostLedger::add_proxy_predictions(uint64_t n, double flops) {
  std::lock_guard lock(mu_);
  proxy_predictions_ += n;
  predict_flops_ += flops;
}

void CostLedger::add_interim_scores(uint64_t n, double flops) {
  std::lock_guard lock(mu_);
  al_interim_scores_ += n;
  sample_flops_ += flops;
}

void CostLedger::add_sample_flops(double f) {
  std::lock_guard lock(mu_);
  sample_flops_ += f;
}

void CostLedger::add_train_flops(double f) {
  std::lock_guard lock(mu_);
  train_flops_ += f;
}

json CostLedger::counts_json() const {
  std::lock_guard lock(mu_);
  return json{{"embed_calls", embed_calls_},
              {"embed_texts", embed_texts_},
              {"cache_hits", cache_hits_},
              {"oracle_requests", oracle_requests_},
              {"oracle_label_calls", oracle_label_calls_},
              {"oracle_fallback_calls", oracle_fallback_calls_},
              {"proxy_predictions", proxy_predictions_},
              {"al_interim_scores", al_interim_scores_},
              {"sample_flops", sample_flops_},
              {"train_flops", train_flops_},
              {"predict_flops", predict_flops_},
              {"embed_flops", embed_flops_}};
}

json LedgerTotals::to_json() const {
  return json{{"stage_latency",
               json{{"embed", stage_embed},
                    {"sample", stage_sample},
                    {"label", stage_label},
                    {"train", stage_train},
                    {"predict", stage_predict}}},
              {"latency_proxy_path", latency_proxy_path},
              {"latency_llm_baseline", latency_llm_baseline},
              {"cost_proxy_path", cost_proxy_path},
              {"cost_llm_baseline", cost_llm_baseline},
              {"savings_multiplier", savings_multiplier},
              {"latency_multiplier", latency_multiplier}};
}

LedgerTotals ledger_report(const CostLedger& led, const CostModel& m,
                           uint64_t n_rows, int workers) {
  m.validate();
  if (workers <= 0) throw DataError("workers must be positive");
  double w = static_cast<double>(workers);

  LedgerTotals t;
  t.stage_embed =
      (static_cast<double>(led.embed_texts()) * m.embed_unit_latency +
       led.embed_flops() / m.vcpu_flops) /
      w;
  t.stage_sample = led.sample_flops() / m.vcpu_flops;
  t.stage_label =
      static_cast<double>(led.oracle_label_calls()) * m.llm_unit_latency / w;
  t.stage_train = led.train_flops() / m.vcpu_flops;
  t.stage_predict =
      (led.predict_flops() / m.vcpu_flops +
       static_cast<double>(led.oracle_fallback_calls()) * m.llm_unit_latency) /
      w;
  t.latency_proxy_path = t.stage_embed + t.stage_sample + t.stage_label +
                         t.stage_train + t.stage_predict;
  t.latency_llm_baseline =
      static_cast<double>(n_rows) * m.llm_unit_latency / w;

  double vcpu_seconds = (led.embed_flops() + led.sample_flops() +
                         led.train_flops() + led.predict_flops()) /
                        m.vcpu_flops;
  t.cost_proxy_path =
      static_cast<double>(led.oracle_label_calls() +
                          led.oracle_fallback_calls()) *
          m.llm_unit +
      static_cast<double>(led.embed_texts()) * m.embed_unit +
      vcpu_seconds * m.vcpu_rate;
  t.cost_llm_baseline = static_cast<double>(n_rows) * m.llm_unit;
  t.savings_multiplier =
      t.cost_proxy_path > 0 ? t.cost_llm_baseline / t.cost_proxy_path : 0.0;
  t.latency_multiplier = t.latency_proxy_path > 0
                             ? t.latency_llm_baseline / t.latency_proxy_path
                             : 0.0;
  return t;
}

}  // namespace proxyq
