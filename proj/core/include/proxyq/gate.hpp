#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "proxyq/ledger.hpp"
#include "proxyq/model.hpp"

namespace proxyq {

enum class GateMetric { Accuracy, MacroF1, Ndcg10 };
enum class RoutePick { Proxy, Llm };
enum class EvalSet { TrainSample, HoldoutFile };

constexpr int kNdcgCutoff = 10;

GateMetric parse_gate_metric(const std::string& name);
std::string to_string(GateMetric m);
std::string to_string(RoutePick c);
std::string to_string(EvalSet e);

struct SelectionDecision {
  RoutePick chosen = RoutePick::Llm;
  double agreement = 0.0;
  double threshold_t = 0.1;
  GateMetric metric = GateMetric::Accuracy;
  EvalSet eval_set = EvalSet::TrainSample;
  std::string reason;
};

nlohmann::json decision_to_json(const SelectionDecision& d);

// Proxy quality with eval_rows' labels taken as the reference:
// accuracy or macro-F1 of predicted classes, or nDCG@10 of rows
// ranked by expected label. Flops are booked to the train stage.
double evaluate_proxy(const ProxyModel& model, const LabeledSample& eval_rows,
                      GateMetric metric, CostLedger* ledger = nullptr);

// chosen = proxy iff 1 - agreement <= t.
SelectionDecision select(const ProxyModel& model,
                         const LabeledSample& eval_rows, double t,
                         GateMetric metric, CostLedger* ledger = nullptr,
                         EvalSet eval_set = EvalSet::TrainSample);

// The llm decision an executor emits when training itself failed.
SelectionDecision llm_fallback_decision(double t, GateMetric metric,
                                        const std::string& reason);

// Replays a labeling stream: after every round_size rows (final round
// may be short), refit from scratch on all rows so far, re-evaluate on
// them, and gate. A proxy pick can revert later.
std::vector<SelectionDecision> incremental_select(
    const LabeledSample& stream, int64_t round_size, double t,
    GateMetric metric, const ImbalanceTechnique& technique = {},
    const FitOptions& opts = {}, CostLedger* ledger = nullptr);

// First 1-based round choosing proxy, or -1.
int first_proxy_round(const std::vector<SelectionDecision>& decisions);

}  // namespace proxyq
