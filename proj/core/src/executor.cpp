#include "proxyq/executor.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <functional>
#include <mutex>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "proxyq/jsonl.hpp"
#include "proxyq/metrics.hpp"
#include "proxyq/parallel.hpp"
#include "proxyq/rng.hpp"
#include "proxyq/sampling.hpp"

namespace proxyq {

namespace {

// Provider request size for labeling; fixed so request counts do not
// depend on the worker count.
constexpr size_t kLabelChunk = 200;

void parallel_chunks(size_t n, int workers,
                     const std::function<void(size_t, size_t)>& fn) {
  std::exception_ptr err;
  std::mutex err_mu;
  parallel_for(n, workers, [&](size_t lo, size_t hi) {
    try {
      fn(lo, hi);
    } catch (...) {
      std::scoped_lock lock(err_mu);
      if (!err) err = std::current_exception();
    }
  });
  if (err) std::rethrow_exception(err);
}

struct LabelBatchOut {
  std::vector<LabeledRow> labels;
  int excluded = 0;
};

// Labels ids in fixed-size requests run in parallel; results land in
// submission order.
LabelBatchOut label_ids(Oracle& oracle, const std::string& prompt,
                        const std::vector<int64_t>& ids, const Table& table,
                        const std::string& column, bool fallback, int workers,
                        CostLedger& ledger) {
  const size_t n = ids.size();
  const size_t batches = (n + kLabelChunk - 1) / kLabelChunk;
  std::vector<std::vector<LabeledRow>> parts(batches);
  std::vector<int> excluded(batches, 0);
  parallel_chunks(batches, workers, [&](size_t lo, size_t hi) {
    for (size_t b = lo; b < hi; ++b) {
      const size_t begin = b * kLabelChunk;
      const size_t end = std::min(n, begin + kLabelChunk);
      std::vector<int64_t> chunk(ids.begin() + static_cast<long>(begin),
                                 ids.begin() + static_cast<long>(end));
      std::vector<std::string> texts;
      texts.reserve(chunk.size());
      for (int64_t id : chunk)
        texts.push_back(table.text_cell(table.row_of(id), column));
      OracleBatchResult res =
          oracle.label_batch(prompt, chunk, texts, fallback, ledger);
      parts[b] = std::move(res.labels);
      excluded[b] = res.excluded;
    }
  });
  LabelBatchOut out;
  out.labels.reserve(n);
  for (auto& p : parts)
    out.labels.insert(out.labels.end(), p.begin(), p.end());
  for (int e : excluded) out.excluded += e;
  return out;
}

LabelBatchOut label_relevance_ids(Oracle& oracle, const std::string& prompt,
                                  int64_t query_id,
                                  const std::vector<int64_t>& ids,
                                  const Table& table,
                                  const std::string& column, bool fallback,
                                  int workers, CostLedger& ledger) {
  const size_t n = ids.size();
  const size_t batches = (n + kLabelChunk - 1) / kLabelChunk;
  std::vector<std::vector<LabeledRow>> parts(batches);
  std::vector<int> excluded(batches, 0);
  parallel_chunks(batches, workers, [&](size_t lo, size_t hi) {
    for (size_t b = lo; b < hi; ++b) {
      const size_t begin = b * kLabelChunk;
      const size_t end = std::min(n, begin + kLabelChunk);
      std::vector<int64_t> chunk(ids.begin() + static_cast<long>(begin),
                                 ids.begin() + static_cast<long>(end));
      std::vector<std::string> texts;
      texts.reserve(chunk.size());
      for (int64_t id : chunk)
        texts.push_back(table.text_cell(table.row_of(id), column));
      OracleBatchResult res = oracle.label_relevance_batch(
          prompt, query_id, chunk, texts, fallback, ledger);
      parts[b] = std::move(res.labels);
      excluded[b] = res.excluded;
    }
  });
  LabelBatchOut out;
  out.labels.reserve(n);
  for (auto& p : parts)
    out.labels.insert(out.labels.end(), p.begin(), p.end());
  for (int e : excluded) out.excluded += e;
  return out;
}

// Precomputed vectors win; the rest are embedded, duplicates once.
EmbeddingStore resolve_embeddings(const std::vector<int64_t>& ids,
                                  const Table& table,
                                  const std::string& column, Providers& pv,
                                  int workers, CostLedger& ledger) {
  const bool have_store = pv.precomputed && pv.precomputed->dim() > 0;
  const int dim =
      have_store ? pv.precomputed->dim() : (pv.embedder ? pv.embedder->dim() : 0);
  if (dim <= 0)
    throw DataError("no embedding source configured for column " + column);

  EmbeddingStore out(dim, ids.size());
  std::vector<int64_t> missing;
  uint64_t hits = 0;
  for (int64_t id : ids) {
    if (have_store && pv.precomputed->has(id)) {
      out.add(id, pv.precomputed->vec(id).data());
      ++hits;
    } else {
      missing.push_back(id);
    }
  }
  if (hits > 0) ledger.add_cache_hits(hits);
  if (missing.empty()) return out;
  if (!pv.embedder)
    throw DataError(std::to_string(missing.size()) +
                    " rows lack precomputed embeddings and no embedder is "
                    "configured");
  if (pv.embedder->dim() != dim)
    throw DataError("embedder dimension " +
                    std::to_string(pv.embedder->dim()) +
                    " does not match the precomputed store's " +
                    std::to_string(dim));

  std::vector<std::string> texts;
  texts.reserve(missing.size());
  std::unordered_map<std::string, size_t> first_use;
  std::vector<size_t> text_row(missing.size());
  for (size_t i = 0; i < missing.size(); ++i) {
    const std::string& t = table.text_cell(table.row_of(missing[i]), column);
    auto [it, fresh] = first_use.try_emplace(t, texts.size());
    if (fresh) texts.push_back(t);
    text_row[i] = it->second;
  }

  const size_t bs = static_cast<size_t>(pv.embedder->spec().batch_size);
  const size_t batches = (texts.size() + bs - 1) / bs;
  MatRXf vecs(static_cast<Eigen::Index>(texts.size()), dim);
  parallel_chunks(batches, workers, [&](size_t lo, size_t hi) {
    for (size_t b = lo; b < hi; ++b) {
      const size_t begin = b * bs;
      const size_t end = std::min(texts.size(), begin + bs);
      std::vector<std::string> chunk(texts.begin() + static_cast<long>(begin),
                                     texts.begin() + static_cast<long>(end));
      MatRXf m = pv.embedder->embed_batch(chunk, ledger);
      vecs.middleRows(static_cast<Eigen::Index>(begin),
                      static_cast<Eigen::Index>(end - begin)) = m;
    }
  });
  for (size_t i = 0; i < missing.size(); ++i)
    out.add(missing[i], vecs.row(static_cast<Eigen::Index>(text_row[i])).data());
  return out;
}

LabeledSample gather_rows(const std::vector<int64_t>& ids,
                          const std::vector<int>& labels,
                          const EmbeddingStore& store) {
  LabeledSample s;
  s.ids = ids;
  s.labels = labels;
  s.x = MatRXf(static_cast<Eigen::Index>(ids.size()), store.dim());
  for (size_t i = 0; i < ids.size(); ++i)
    s.x.row(static_cast<Eigen::Index>(i)) = store.vec(ids[i]);
  return s;
}

std::vector<int64_t> relational_survivors(const Table& table,
                                          const LogicalPlan& plan) {
  std::vector<int64_t> out;
  out.reserve(table.n_rows());
  for (size_t row = 0; row < table.n_rows(); ++row)
    if (row_matches(table, row, plan.relational_predicates))
      out.push_back(table.id_at(row));
  return out;
}

GateMetric op_metric(const RunConfig& cfg, OpKind kind) {
  if (!cfg.gate_metric.empty()) return parse_gate_metric(cfg.gate_metric);
  switch (kind) {
    case OpKind::IF: return GateMetric::Accuracy;
    case OpKind::CLASSIFY: return GateMetric::MacroF1;
    case OpKind::RANK: return GateMetric::Ndcg10;
  }
  return GateMetric::Accuracy;
}

// Holdout records are {id, label}; vectors resolve like any other row.
LabeledSample load_holdout(const std::string& path, const Table& table,
                           const std::string& column, Providers& pv,
                           int workers, CostLedger& ledger) {
  std::map<int64_t, int> gold = load_gold(path);
  if (gold.empty()) throw DataError(path + ": empty holdout file");
  std::vector<int64_t> ids;
  std::vector<int> labels;
  ids.reserve(gold.size());
  for (const auto& [id, label] : gold) {
    if (!table.has_id(id))
      throw DataError("holdout row " + std::to_string(id) +
                      " is not in the table");
    ids.push_back(id);
    labels.push_back(label);
  }
  EmbeddingStore store =
      resolve_embeddings(ids, table, column, pv, workers, ledger);
  return gather_rows(ids, labels, store);
}

int positive_class(const ProxyModel& model) { return model.classes.back(); }

// Proxy labels for `ids`, parallel over row chunks. Binary models use
// the decision threshold on the positive class; multi-class takes the
// argmax.
std::vector<int> predict_labels(const ProxyModel& model,
                                const std::vector<int64_t>& ids,
                                const EmbeddingStore& store, double threshold,
                                int workers, CostLedger& ledger) {
  std::vector<int> out(ids.size(), 0);
  parallel_chunks(ids.size(), workers, [&](size_t lo, size_t hi) {
    MatRXf x(static_cast<Eigen::Index>(hi - lo), store.dim());
    for (size_t i = lo; i < hi; ++i)
      x.row(static_cast<Eigen::Index>(i - lo)) = store.vec(ids[i]);
    if (model.is_binary()) {
      Eigen::MatrixXd proba = model.predict_proba(x);
      for (size_t i = lo; i < hi; ++i) {
        double p = proba(static_cast<Eigen::Index>(i - lo), 1);
        out[i] = p >= threshold ? model.classes[1] : model.classes[0];
      }
    } else {
      std::vector<int> cls = model.predict_class(x);
      for (size_t i = lo; i < hi; ++i) out[i] = cls[i - lo];
    }
    ledger.add_proxy_predictions(
        hi - lo, 2.0 * static_cast<double>(hi - lo) * store.dim() *
                     static_cast<double>(model.weights.rows()));
  });
  return out;
}

struct OpOutcome {
  SelectionDecision decision;
  std::map<int64_t, int> labels;  // one entry per survivor
  ProxyModel model;
  bool trained = false;
  LabeledSample sample;
};

int64_t scaled_sample_n(const SamplePlan& plan, OpKind kind,
                        const SemanticOp& op, const RunConfig& cfg) {
  int64_t n = plan.n;
  if (kind == OpKind::CLASSIFY && cfg.classify_sample_per_class > 0 &&
      op.params.contains("categories")) {
    int64_t k = static_cast<int64_t>(op.params.at("categories").size());
    n = std::max(n, static_cast<int64_t>(cfg.classify_sample_per_class) * k);
  }
  return n;
}

// Shared IF/CLASSIFY stage over one survivor set: embeddings, sample,
// labels, fit, gate, then predict or fall back.
OpOutcome execute_label_op(const SemanticOp& op, const Table& table,
                           const std::vector<int64_t>& survivors,
                           Providers& pv, const RunConfig& cfg,
                           uint64_t op_seed, CostLedger& ledger,
                           std::vector<std::string>& notes) {
  if (!pv.oracle) throw DataError("no oracle configured");
  OpOutcome oc;
  const GateMetric metric = op_metric(cfg, op.kind);

  EmbeddingStore store =
      resolve_embeddings(survivors, table, op.column, pv, cfg.workers, ledger);

  SamplePlan plan = SamplePlan::parse(cfg.sample);
  const uint64_t seed = hash_combine(op_seed, plan.seed);
  const int64_t total = static_cast<int64_t>(survivors.size());
  int64_t n = std::min(scaled_sample_n(plan, op.kind, op, cfg), total);
  if (n < scaled_sample_n(plan, op.kind, op, cfg))
    notes.push_back("sample clamped to " + std::to_string(n) +
                    " surviving rows");

  std::vector<int64_t> sample_ids;
  std::vector<int> sample_labels;
  if (plan.strategy == SampleStrategy::Active && n >= 2 * plan.batch) {
    ActiveResult ar =
        sample_active(table, store, *pv.oracle, op.prompt, op.column, n,
                      plan.batch, seed, ledger, {}, &survivors);
    if (ar.aborted)
      throw TransportError("sample stage: oracle transport failed after " +
                           std::to_string(ar.rounds) + " rounds");
    if (ar.excluded > 0)
      notes.push_back(std::to_string(ar.excluded) +
                      " sampled rows excluded by the oracle");
    sample_ids = ar.sample.ids;
    sample_labels = ar.sample.labels;
  } else {
    if (plan.strategy == SampleStrategy::Active)
      notes.push_back("active sampling needs n >= 2*batch after clamping; "
                      "using random");
    std::vector<int64_t> picked;
    if (plan.strategy == SampleStrategy::TopK) {
      if (!pv.embedder)
        throw DataError("top-k sampling needs an embedder for the prompt");
      MatRXf q = pv.embedder->embed_batch({op.prompt}, ledger);
      std::vector<float> qv(q.data(), q.data() + q.cols());
      picked = sample_topk(qv, store, n, &ledger);
    } else {
      picked = sample_random(survivors, n, seed, &ledger);
    }
    LabelBatchOut lab = label_ids(*pv.oracle, op.prompt, picked, table,
                                  op.column, false, cfg.workers, ledger);
    if (lab.excluded > 0)
      notes.push_back(std::to_string(lab.excluded) +
                      " sampled rows excluded by the oracle");
    sample_ids.reserve(lab.labels.size());
    for (const LabeledRow& r : lab.labels) {
      sample_ids.push_back(r.id);
      sample_labels.push_back(r.value);
    }
  }

  oc.sample = gather_rows(sample_ids, sample_labels, store);

  if (op.kind == OpKind::CLASSIFY && op.params.contains("categories")) {
    std::map<int, int64_t> counts = oc.sample.class_counts();
    const auto& cats = op.params.at("categories");
    for (size_t c = 0; c < cats.size(); ++c)
      if (!counts.count(static_cast<int>(c)))
        notes.push_back("category '" + cats.at(c).get<std::string>() +
                        "' absent from the sample");
  }

  try {
    ImbalanceTechnique technique =
        choose_technique(oc.sample.class_counts(), cfg.minority_floor);
    FitOptions opts;
    opts.seed = seed;
    oc.model = fit_logistic(oc.sample, technique, opts, &ledger);
    oc.trained = true;
  } catch (const TrainError& e) {
    oc.decision = llm_fallback_decision(cfg.tau, metric, e.what());
  }

  if (oc.trained) {
    if (!cfg.holdout_path.empty()) {
      LabeledSample holdout = load_holdout(cfg.holdout_path, table, op.column,
                                           pv, cfg.workers, ledger);
      oc.decision = select(oc.model, holdout, cfg.tau, metric, &ledger,
                           EvalSet::HoldoutFile);
    } else {
      oc.decision = select(oc.model, oc.sample, cfg.tau, metric, &ledger,
                           EvalSet::TrainSample);
    }
    oc.model.train_meta.agreement_on_sample = oc.decision.agreement;
  }

  for (size_t i = 0; i < sample_ids.size(); ++i)
    oc.labels[sample_ids[i]] = sample_labels[i];

  std::unordered_set<int64_t> sampled(sample_ids.begin(), sample_ids.end());
  std::vector<int64_t> remaining;
  remaining.reserve(survivors.size());
  for (int64_t id : survivors)
    if (!sampled.count(id)) remaining.push_back(id);

  if (oc.decision.chosen == RoutePick::Proxy) {
    std::vector<int> pred = predict_labels(
        oc.model, remaining, store, cfg.filter_threshold, cfg.workers, ledger);
    for (size_t i = 0; i < remaining.size(); ++i)
      oc.labels[remaining[i]] = pred[i];
  } else {
    LabelBatchOut lab = label_ids(*pv.oracle, op.prompt, remaining, table,
                                  op.column, true, cfg.workers, ledger);
    for (const LabeledRow& r : lab.labels) oc.labels[r.id] = r.value;
    if (lab.excluded > 0) {
      notes.push_back(std::to_string(lab.excluded) +
                      " fallback rows excluded by the oracle; labeled 0");
      for (int64_t id : remaining)
        if (!oc.labels.count(id)) oc.labels[id] = 0;
    }
  }
  return oc;
}

void attach_quality_vs_gold(ExecutionReport& report, bool binary) {
  if (report.config.gold_path.empty()) return;
  std::map<int64_t, int> gold = load_gold(report.config.gold_path);
  std::vector<int> pred;
  std::vector<int> truth;
  int max_label = 1;
  for (const auto& [id, label] : report.outputs) {
    auto it = gold.find(id);
    if (it == gold.end()) continue;
    pred.push_back(label);
    truth.push_back(it->second);
    max_label = std::max({max_label, label, it->second});
  }
  if (pred.empty()) {
    report.notes.push_back("gold file shares no ids with the outputs");
    return;
  }
  ConfusionCounts counts = confusion_from_labels(pred, truth, max_label + 1);
  report.quality["evaluated"] = pred.size();
  report.quality["accuracy"] = accuracy_score(pred, truth);
  if (binary)
    report.quality["f1"] = f1_binary(counts);
  else
    report.quality["macro_f1"] = macro_f1(counts);
}

void finish_report(ExecutionReport& report) {
  report.totals = ledger_report(report.ledger, report.config.costs,
                                report.n_rows, report.config.workers);
  for (const SelectionDecision& d : report.decisions)
    if (d.chosen == RoutePick::Llm) report.fallback = true;
}

ExecutionReport run_label_pipeline(const LogicalPlan& plan, const Table& table,
                                   Providers& pv, const RunConfig& config,
                                   OpKind kind) {
  config.validate();
  ExecutionReport report;
  report.config = config;
  report.plan = plan.bound ? plan : bind_plan(plan, TableSchema::of(table));

  std::vector<const SemanticOp*> ops;
  for (const SemanticOp& op : report.plan.semantic_ops)
    if (op.kind == kind) ops.push_back(&op);
  if (ops.empty() || ops.size() != report.plan.semantic_ops.size())
    throw DataError(std::string("plan must carry only AI.") +
                    op_kind_name(kind) + " ops");
  if (kind == OpKind::CLASSIFY) {
    if (ops.size() != 1)
      throw DataError("classification runs take exactly one AI.CLASSIFY");
    const nlohmann::json& params = ops[0]->params;
    if (!params.contains("categories") || params.at("categories").size() < 2)
      throw DataError("classification requires >= 2 categories");
  }

  std::vector<int64_t> current = relational_survivors(table, report.plan);
  const std::vector<int64_t> initial = current;
  if (current.empty())
    report.notes.push_back("no rows survive the relational predicates");

  for (size_t i = 0; i < ops.size(); ++i) {
    if (current.empty()) break;
    report.n_rows += current.size();
    const uint64_t op_seed = hash_combine(config.seed, i);
    OpOutcome oc = execute_label_op(*ops[i], table, current, pv, config,
                                    op_seed, report.ledger, report.notes);
    report.decisions.push_back(oc.decision);
    if (kind == OpKind::IF) {
      std::vector<int64_t> next;
      next.reserve(current.size());
      for (int64_t id : current) {
        if (oc.labels.at(id) == 1)
          next.push_back(id);
        else
          report.outputs[id] = 0;
      }
      current = std::move(next);
    } else {
      report.outputs = std::move(oc.labels);
    }
  }
  if (kind == OpKind::IF)
    for (int64_t id : current) report.outputs[id] = 1;

  attach_quality_vs_gold(report, kind == OpKind::IF);
  finish_report(report);
  return report;
}

}  // namespace

std::string to_string(LabelSource s) {
  return s == LabelSource::Oracle ? "oracle" : "proxy";
}

nlohmann::json RankedList::to_json() const {
  nlohmann::json items = nlohmann::json::array();
  for (const RankEntry& e : entries)
    items.push_back(nlohmann::json{{"doc_id", e.doc_id},
                                   {"score", e.score},
                                   {"source", to_string(e.source)}});
  return nlohmann::json{
      {"query_id", query_id}, {"cutoff", cutoff}, {"entries", items}};
}

nlohmann::json ExecutionReport::to_json() const {
  nlohmann::json dec = nlohmann::json::array();
  for (const SelectionDecision& d : decisions)
    dec.push_back(decision_to_json(d));
  nlohmann::json outs = nlohmann::json::array();
  for (const auto& [id, label] : outputs)
    outs.push_back(nlohmann::json::array({id, label}));
  nlohmann::json ranks = nlohmann::json::array();
  for (const RankedList& r : rankings) ranks.push_back(r.to_json());
  return nlohmann::json{{"version", kVersion},
                        {"config", config.to_json()},
                        {"plan", plan_to_json(plan)},
                        {"decisions", dec},
                        {"fallback", fallback},
                        {"n_rows", n_rows},
                        {"counts", ledger.counts_json()},
                        {"totals", totals.to_json()},
                        {"outputs", outs},
                        {"rankings", ranks},
                        {"quality", quality},
                        {"notes", notes}};
}

std::string ExecutionReport::to_json_text() const {
  return to_json().dump(2) + "\n";
}

ExecutionReport run_filter(const LogicalPlan& plan, const Table& table,
                           Providers& providers, const RunConfig& config) {
  return run_label_pipeline(plan, table, providers, config, OpKind::IF);
}

ExecutionReport run_classify(const LogicalPlan& plan, const Table& table,
                             Providers& providers, const RunConfig& config) {
  return run_label_pipeline(plan, table, providers, config, OpKind::CLASSIFY);
}

ExecutionReport run_rank(const LogicalPlan& plan,
                         const std::vector<SynthQuery>& queries,
                         const Table& corpus, Providers& providers,
                         const RunConfig& config) {
  config.validate();
  if (!providers.oracle) throw DataError("no oracle configured");
  if (queries.empty()) throw DataError("rank run needs query rows");

  ExecutionReport report;
  report.config = config;
  report.plan =
      plan.bound ? plan : bind_plan(plan, TableSchema::of(corpus));
  const SemanticOp* op = nullptr;
  for (const SemanticOp& o : report.plan.semantic_ops)
    if (o.kind == OpKind::RANK) op = &o;
  if (!op || report.plan.semantic_ops.size() != 1)
    throw DataError("rank runs take exactly one AI.RANK");
  const GateMetric metric = op_metric(config, OpKind::RANK);
  const int cutoff = report.plan.limit
                         ? static_cast<int>(*report.plan.limit)
                         : config.rank_cutoff;

  std::vector<int64_t> pool_universe = relational_survivors(corpus, report.plan);
  EmbeddingStore store = resolve_embeddings(pool_universe, corpus, op->column,
                                            providers, config.workers,
                                            report.ledger);
  if (static_cast<int64_t>(pool_universe.size()) < config.prefilter)
    report.notes.push_back("corpus smaller than the prefilter; using all " +
                           std::to_string(pool_universe.size()) + " docs");

  double ndcg_sum = 0.0;
  int ndcg_queries = 0;
  std::map<int64_t, std::map<int64_t, int>> qrels;
  if (!config.qrels_path.empty()) qrels = load_qrels(config.qrels_path);

  for (const SynthQuery& q : queries) {
    const int64_t k =
        std::min<int64_t>(config.prefilter,
                          static_cast<int64_t>(pool_universe.size()));
    if (k <= 0) throw DataError("empty candidate pool for query " +
                                std::to_string(q.id));
    report.n_rows += static_cast<uint64_t>(k);

    std::vector<float> qv = q.embedding;
    if (qv.empty()) {
      if (!providers.embedder)
        throw DataError("query " + std::to_string(q.id) +
                        " has no vector and no embedder is configured");
      MatRXf m = providers.embedder->embed_batch({q.text}, report.ledger);
      qv.assign(m.data(), m.data() + m.cols());
    }
    if (static_cast<int>(qv.size()) != store.dim())
      throw DataError("query vector dimension " + std::to_string(qv.size()) +
                      " does not match the corpus embeddings");

    std::vector<int64_t> pool =
        sample_topk(qv, store, k, &report.ledger, &pool_universe);
    const int64_t train_n = std::min<int64_t>(config.rank_train_n, k);
    std::vector<int64_t> train_ids =
        sample_random(pool, train_n,
                      hash_combine(config.seed, static_cast<uint64_t>(q.id)),
                      &report.ledger);
    LabelBatchOut lab = label_relevance_ids(
        *providers.oracle, op->prompt, q.id, train_ids, corpus, op->column,
        false, config.workers, report.ledger);
    std::vector<int64_t> labeled_ids;
    std::vector<int> levels;
    labeled_ids.reserve(lab.labels.size());
    for (const LabeledRow& r : lab.labels) {
      labeled_ids.push_back(r.id);
      levels.push_back(r.value);
    }
    LabeledSample sample = gather_rows(labeled_ids, levels, store);

    SelectionDecision decision;
    ProxyModel model;
    bool trained = false;
    try {
      ImbalanceTechnique technique =
          choose_technique(sample.class_counts(), config.minority_floor);
      FitOptions opts;
      opts.seed = hash_combine(config.seed, static_cast<uint64_t>(q.id));
      model = fit_logistic(sample, technique, opts, &report.ledger);
      trained = true;
      decision = select(model, sample, config.tau, metric, &report.ledger,
                        EvalSet::TrainSample);
    } catch (const TrainError& e) {
      decision = llm_fallback_decision(config.tau, metric, e.what());
    }
    report.decisions.push_back(decision);

    std::unordered_map<int64_t, double> score;
    std::unordered_map<int64_t, LabelSource> source;
    for (size_t i = 0; i < labeled_ids.size(); ++i) {
      score[labeled_ids[i]] = static_cast<double>(levels[i]);
      source[labeled_ids[i]] = LabelSource::Oracle;
    }
    std::vector<int64_t> remaining;
    remaining.reserve(pool.size());
    {
      std::unordered_set<int64_t> taken(labeled_ids.begin(),
                                        labeled_ids.end());
      for (int64_t id : pool)
        if (!taken.count(id)) remaining.push_back(id);
    }
    if (decision.chosen == RoutePick::Proxy && trained) {
      std::vector<double> expected(remaining.size(), 0.0);
      parallel_chunks(remaining.size(), config.workers, [&](size_t lo,
                                                            size_t hi) {
        MatRXf x(static_cast<Eigen::Index>(hi - lo), store.dim());
        for (size_t i = lo; i < hi; ++i)
          x.row(static_cast<Eigen::Index>(i - lo)) = store.vec(remaining[i]);
        Eigen::MatrixXd proba = model.predict_proba(x);
        for (size_t i = lo; i < hi; ++i)
          for (size_t c = 0; c < model.classes.size(); ++c)
            expected[i] += model.classes[c] *
                           proba(static_cast<Eigen::Index>(i - lo),
                                 static_cast<Eigen::Index>(c));
        report.ledger.add_proxy_predictions(
            hi - lo, 2.0 * static_cast<double>(hi - lo) * store.dim() *
                         static_cast<double>(model.weights.rows()));
      });
      for (size_t i = 0; i < remaining.size(); ++i) {
        score[remaining[i]] = expected[i];
        source[remaining[i]] = LabelSource::Proxy;
      }
    } else {
      LabelBatchOut fb = label_relevance_ids(
          *providers.oracle, op->prompt, q.id, remaining, corpus, op->column,
          true, config.workers, report.ledger);
      for (const LabeledRow& r : fb.labels) {
        score[r.id] = static_cast<double>(r.value);
        source[r.id] = LabelSource::Oracle;
      }
      for (int64_t id : remaining)
        if (!score.count(id)) {
          score[id] = 0.0;
          source[id] = LabelSource::Oracle;
        }
    }

    std::vector<int64_t> order = pool;
    std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
      double sa = score.at(a), sb = score.at(b);
      if (sa != sb) return sa > sb;
      return a < b;
    });

    RankedList list;
    list.query_id = q.id;
    list.cutoff = cutoff;
    for (int64_t id : order) {
      if (static_cast<int>(list.entries.size()) >= cutoff) break;
      list.entries.push_back(RankEntry{id, score.at(id), source.at(id)});
    }
    report.rankings.push_back(std::move(list));

    auto qit = qrels.find(q.id);
    if (qit != qrels.end()) {
      std::vector<int> ranked_levels;
      ranked_levels.reserve(order.size());
      for (int64_t id : order) {
        auto dit = qit->second.find(id);
        ranked_levels.push_back(dit == qit->second.end() ? 0 : dit->second);
      }
      ndcg_sum += ndcg_at_k(ranked_levels, cutoff);
      ndcg_queries += 1;
    }
  }

  if (ndcg_queries > 0) {
    report.quality["mean_ndcg"] = ndcg_sum / ndcg_queries;
    report.quality["ndcg_queries"] = ndcg_queries;
  }
  int llm_queries = 0;
  for (const SelectionDecision& d : report.decisions)
    if (d.chosen == RoutePick::Llm) ++llm_queries;
  report.quality["llm_queries"] = llm_queries;
  report.quality["queries"] = queries.size();

  finish_report(report);
  return report;
}

ExecutionReport train_offline(const LogicalPlan& plan, const Table& table,
                              Providers& providers, const RunConfig& config) {
  config.validate();
  if (config.model_path.empty())
    throw DataError("train-offline needs a model path");
  if (!providers.oracle) throw DataError("no oracle configured");
  ExecutionReport report;
  report.config = config;
  report.plan = plan.bound ? plan : bind_plan(plan, TableSchema::of(table));
  if (report.plan.semantic_ops.size() != 1 ||
      report.plan.semantic_ops[0].kind == OpKind::RANK)
    throw DataError("train-offline takes one AI.IF or AI.CLASSIFY");
  const SemanticOp& op = report.plan.semantic_ops[0];
  if (op.kind == OpKind::CLASSIFY &&
      (!op.params.contains("categories") ||
       op.params.at("categories").size() < 2))
    throw DataError("classification requires >= 2 categories");

  std::vector<int64_t> survivors = relational_survivors(table, report.plan);
  if (survivors.empty()) throw DataError("no rows survive the predicates");
  report.n_rows = survivors.size();

  EmbeddingStore store = resolve_embeddings(
      survivors, table, op.column, providers, config.workers, report.ledger);

  SamplePlan splan = SamplePlan::parse(config.sample);
  const uint64_t seed = hash_combine(config.seed, splan.seed);
  const int64_t n = std::min(scaled_sample_n(splan, op.kind, op, config),
                             static_cast<int64_t>(survivors.size()));
  std::vector<int64_t> sample_ids;
  std::vector<int> sample_labels;
  if (splan.strategy == SampleStrategy::Active && n >= 2 * splan.batch) {
    ActiveResult ar =
        sample_active(table, store, *providers.oracle, op.prompt, op.column, n,
                      splan.batch, seed, report.ledger, {}, &survivors);
    if (ar.aborted)
      throw TransportError("sample stage: oracle transport failed");
    sample_ids = ar.sample.ids;
    sample_labels = ar.sample.labels;
  } else {
    std::vector<int64_t> picked = sample_random(survivors, n, seed,
                                                &report.ledger);
    LabelBatchOut lab =
        label_ids(*providers.oracle, op.prompt, picked, table, op.column,
                  false, config.workers, report.ledger);
    for (const LabeledRow& r : lab.labels) {
      sample_ids.push_back(r.id);
      sample_labels.push_back(r.value);
    }
  }
  LabeledSample sample = gather_rows(sample_ids, sample_labels, store);

  ImbalanceTechnique technique =
      choose_technique(sample.class_counts(), config.minority_floor);
  FitOptions opts;
  opts.seed = seed;
  ProxyModel model = fit_logistic(sample, technique, opts, &report.ledger);

  const GateMetric metric = op_metric(config, op.kind);
  SelectionDecision decision = select(model, sample, config.tau, metric,
                                      &report.ledger, EvalSet::TrainSample);
  model.train_meta.agreement_on_sample = decision.agreement;
  report.decisions.push_back(decision);
  save_model(model, config.model_path);
  report.notes.push_back("model saved to " + config.model_path);
  finish_report(report);
  return report;
}

ExecutionReport run_offline(const LogicalPlan& plan, const Table& table,
                            Providers& providers, const RunConfig& config) {
  config.validate();
  if (config.model_path.empty())
    throw DataError("offline runs need a model path");
  ExecutionReport report;
  report.config = config;
  report.plan = plan.bound ? plan : bind_plan(plan, TableSchema::of(table));
  if (report.plan.semantic_ops.size() != 1 ||
      report.plan.semantic_ops[0].kind == OpKind::RANK)
    throw DataError("offline runs take one AI.IF or AI.CLASSIFY");
  const SemanticOp& op = report.plan.semantic_ops[0];
  const GateMetric metric = op_metric(config, op.kind);

  ProxyModel model = load_model(config.model_path);
  if (op.kind == OpKind::IF && !model.is_binary())
    throw DataError("model/task mismatch: AI.IF needs a binary model, got " +
                    std::to_string(model.classes.size()) + " classes");
  if (op.kind == OpKind::CLASSIFY && op.params.contains("categories")) {
    const int k = static_cast<int>(op.params.at("categories").size());
    if (model.classes.empty() || model.classes.back() >= k)
      throw DataError("model/task mismatch: model classes exceed the " +
                      std::to_string(k) + " declared categories");
  }

  std::vector<int64_t> survivors = relational_survivors(table, report.plan);
  report.n_rows = survivors.size();
  if (survivors.empty()) {
    report.notes.push_back("no rows survive the relational predicates");
    finish_report(report);
    return report;
  }

  EmbeddingStore store = resolve_embeddings(
      survivors, table, op.column, providers, config.workers, report.ledger);
  if (store.dim() != model.dim)
    throw DataError("model dimension " + std::to_string(model.dim) +
                    " does not match the embeddings' " +
                    std::to_string(store.dim()));

  SelectionDecision decision;
  if (!config.holdout_path.empty()) {
    LabeledSample holdout = load_holdout(config.holdout_path, table, op.column,
                                         providers, config.workers,
                                         report.ledger);
    // The training stage stays at zero cost offline, so the gate check
    // is not booked to it.
    decision = select(model, holdout, config.tau, metric, nullptr,
                      EvalSet::HoldoutFile);
    if (model.train_meta.agreement_on_sample && config.drift_alarm > 0.0) {
      const double drop =
          *model.train_meta.agreement_on_sample - decision.agreement;
      if (drop >= config.drift_alarm)
        report.notes.push_back(
            "agreement dropped from " +
            std::to_string(*model.train_meta.agreement_on_sample) + " to " +
            std::to_string(decision.agreement) +
            "; retraining recommended");
    }
  } else {
    decision.chosen = RoutePick::Proxy;
    decision.metric = metric;
    decision.threshold_t = config.tau;
    decision.eval_set = EvalSet::TrainSample;
    decision.agreement = model.train_meta.agreement_on_sample.value_or(0.0);
    decision.reason = "gate check skipped: no holdout provided";
  }
  report.decisions.push_back(decision);

  if (decision.chosen == RoutePick::Proxy) {
    std::vector<int> pred =
        predict_labels(model, survivors, store, config.filter_threshold,
                       config.workers, report.ledger);
    for (size_t i = 0; i < survivors.size(); ++i)
      report.outputs[survivors[i]] = pred[i];
  } else {
    if (!providers.oracle)
      throw DataError("gate forced fallback but no oracle is configured");
    LabelBatchOut lab = label_ids(*providers.oracle, op.prompt, survivors,
                                  table, op.column, true, config.workers,
                                  report.ledger);
    for (const LabeledRow& r : lab.labels) report.outputs[r.id] = r.value;
    for (int64_t id : survivors)
      if (!report.outputs.count(id)) report.outputs[id] = 0;
  }

  attach_quality_vs_gold(report, op.kind == OpKind::IF);
  finish_report(report);
  return report;
}

}  // namespace proxyq
