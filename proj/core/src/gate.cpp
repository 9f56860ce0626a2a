#include "proxyq/gate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "proxyq/errors.hpp"
#include "proxyq/metrics.hpp"

namespace proxyq {

GateMetric parse_gate_metric(const std::string& name) {
  if (name == "accuracy") return GateMetric::Accuracy;
  if (name == "macro_f1") return GateMetric::MacroF1;
  if (name == "ndcg10") return GateMetric::Ndcg10;
  throw DataError("unknown gate metric \"" + name +
                  "\" (expected accuracy, macro_f1, or ndcg10)");
}

std::string to_string(GateMetric m) {
  switch (m) {
    case GateMetric::Accuracy: return "accuracy";
    case GateMetric::MacroF1: return "macro_f1";
    case GateMetric::Ndcg10: return "ndcg10";
  }
  return "accuracy";
}

std::string to_string(RoutePick c) {
  return c == RoutePick::Proxy ? "proxy" : "llm";
}

std::string to_string(EvalSet e) {
  return e == EvalSet::TrainSample ? "train_sample" : "holdout_file";
}

nlohmann::json decision_to_json(const SelectionDecision& d) {
  return nlohmann::json{{"chosen", to_string(d.chosen)},
                        {"agreement", d.agreement},
                        {"threshold_t", d.threshold_t},
                        {"metric", to_string(d.metric)},
                        {"eval_set", to_string(d.eval_set)},
                        {"reason", d.reason}};
}

namespace {

void format_agreement_reason(const SelectionDecision& d, std::string* out) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "agreement %.4f %s gate floor %.4f",
                d.agreement,
                d.chosen == RoutePick::Proxy ? "meets" : "misses",
                1.0 - d.threshold_t);
  *out = buf;
}

}  // namespace

double evaluate_proxy(const ProxyModel& model, const LabeledSample& eval_rows,
                      GateMetric metric, CostLedger* ledger) {
  if (eval_rows.size() == 0) throw DataError("empty evaluation set");
  if (eval_rows.x.cols() != model.dim)
    throw DataError("evaluation rows have dimension " +
                    std::to_string(eval_rows.x.cols()) + ", model expects " +
                    std::to_string(model.dim));
  if (ledger)
    ledger->add_train_flops(2.0 * static_cast<double>(eval_rows.size()) *
                            model.dim *
                            static_cast<double>(model.weights.rows()));

  if (metric == GateMetric::Ndcg10) {
    Eigen::MatrixXd proba = model.predict_proba(eval_rows.x);
    Eigen::VectorXd expected = Eigen::VectorXd::Zero(proba.rows());
    for (Eigen::Index c = 0; c < proba.cols(); ++c)
      expected += proba.col(c) * static_cast<double>(
                                     model.classes[static_cast<size_t>(c)]);
    std::vector<size_t> order(eval_rows.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      double sa = expected(static_cast<Eigen::Index>(a));
      double sb = expected(static_cast<Eigen::Index>(b));
      if (sa != sb) return sa > sb;
      return eval_rows.ids[a] < eval_rows.ids[b];
    });
    std::vector<int> ranked;
    ranked.reserve(order.size());
    for (size_t i : order) ranked.push_back(eval_rows.labels[i]);
    return ndcg_at_k(ranked, kNdcgCutoff);
  }

  std::vector<int> pred = model.predict_class(eval_rows.x);
  if (metric == GateMetric::Accuracy)
    return accuracy_score(pred, eval_rows.labels);

  int num_classes = 0;
  for (int c : model.classes) num_classes = std::max(num_classes, c + 1);
  for (int v : eval_rows.labels) num_classes = std::max(num_classes, v + 1);
  return macro_f1(confusion_from_labels(pred, eval_rows.labels, num_classes));
}

SelectionDecision select(const ProxyModel& model,
                         const LabeledSample& eval_rows, double t,
                         GateMetric metric, CostLedger* ledger,
                         EvalSet eval_set) {
  if (!(t >= 0.0 && t <= 1.0))
    throw DataError("gate threshold t must lie in [0, 1], got " +
                    std::to_string(t));
  SelectionDecision d;
  d.agreement = evaluate_proxy(model, eval_rows, metric, ledger);
  d.threshold_t = t;
  d.metric = metric;
  d.eval_set = eval_set;
  d.chosen = (1.0 - d.agreement <= t) ? RoutePick::Proxy : RoutePick::Llm;
  format_agreement_reason(d, &d.reason);
  return d;
}

SelectionDecision llm_fallback_decision(double t, GateMetric metric,
                                        const std::string& reason) {
  SelectionDecision d;
  d.chosen = RoutePick::Llm;
  d.agreement = 0.0;
  d.threshold_t = t;
  d.metric = metric;
  d.reason = reason;
  return d;
}

std::vector<SelectionDecision> incremental_select(
    const LabeledSample& stream, int64_t round_size, double t,
    GateMetric metric, const ImbalanceTechnique& technique,
    const FitOptions& opts, CostLedger* ledger) {
  if (round_size <= 0) throw DataError("round size must be positive");
  if (stream.size() == 0) throw DataError("empty labeling stream");

  std::vector<SelectionDecision> decisions;
  int64_t total = static_cast<int64_t>(stream.size());
  for (int64_t end = std::min(round_size, total);;
       end = std::min(end + round_size, total)) {
    LabeledSample prefix;
    prefix.ids.assign(stream.ids.begin(), stream.ids.begin() + end);
    prefix.labels.assign(stream.labels.begin(), stream.labels.begin() + end);
    prefix.x = stream.x.topRows(static_cast<Eigen::Index>(end));
    try {
      ProxyModel model = fit_logistic(prefix, technique, opts, ledger);
      decisions.push_back(select(model, prefix, t, metric, ledger));
    } catch (const TrainError& e) {
      decisions.push_back(llm_fallback_decision(t, metric, e.what()));
    }
    if (end == total) break;
  }
  return decisions;
}

int first_proxy_round(const std::vector<SelectionDecision>& decisions) {
  for (size_t i = 0; i < decisions.size(); ++i)
    if (decisions[i].chosen == RoutePick::Proxy)
      return static_cast<int>(i) + 1;
  return -1;
}

}  // namespace proxyq
