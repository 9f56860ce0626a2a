#include "proxyq/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_set>

#include "proxyq/errors.hpp"
#include "proxyq/rng.hpp"
#include "proxyq/specstr.hpp"

namespace proxyq {

namespace {

void check_keys(const SpecString& s, const std::set<std::string>& allowed,
                const std::string& flag) {
  for (const auto& [key, _] : s.params)
    if (!allowed.count(key))
      throw DataError("unknown sample parameter \"" + key + "\" in \"" +
                      flag + "\"");
}

}  // namespace

SamplePlan SamplePlan::parse(const std::string& flag) {
  SpecString s = SpecString::parse(flag);
  SamplePlan plan;
  if (s.kind == "random") {
    plan.strategy = SampleStrategy::Random;
    check_keys(s, {"n", "seed"}, flag);
    plan.n = s.get_int("n", plan.n);
    plan.seed = static_cast<uint64_t>(s.get_int("seed", 42));
  } else if (s.kind == "active") {
    plan.strategy = SampleStrategy::Active;
    check_keys(s, {"n", "batch", "seed"}, flag);
    plan.n = s.get_int("n", plan.n);
    plan.batch = s.get_int("batch", plan.batch);
    plan.seed = static_cast<uint64_t>(s.get_int("seed", 42));
  } else if (s.kind == "topk") {
    plan.strategy = SampleStrategy::TopK;
    check_keys(s, {"k", "n"}, flag);
    plan.k = s.get_int("k", s.get_int("n", plan.k));
    plan.n = plan.k;
  } else {
    throw DataError("unknown sample strategy \"" + s.kind +
                    "\" (expected random, topk, or active)");
  }
  if (plan.n <= 0) throw DataError("sample size must be positive");
  if (plan.batch <= 0) throw DataError("sample batch must be positive");
  if (plan.k <= 0) throw DataError("sample k must be positive");
  if (plan.strategy == SampleStrategy::Active && plan.batch > plan.n)
    throw DataError("sample batch exceeds n");
  return plan;
}

std::vector<int64_t> sample_random(const std::vector<int64_t>& pool,
                                   int64_t n, uint64_t seed,
                                   CostLedger* ledger) {
  if (n <= 0) throw DataError("sample size must be positive");
  int64_t total = static_cast<int64_t>(pool.size());
  if (n > total)
    throw DataError("sample size " + std::to_string(n) + " exceeds pool of " +
                    std::to_string(total) + " rows");
  std::vector<int64_t> ids = pool;
  Rng rng(mix64(seed ^ 0x7A2D5EEDULL));
  for (int64_t i = 0; i < n; ++i) {
    int64_t j = i + static_cast<int64_t>(
                        rng.uniform_int(static_cast<uint64_t>(total - i)));
    std::swap(ids[i], ids[j]);
  }
  ids.resize(static_cast<size_t>(n));
  if (ledger) ledger->add_sample_flops(static_cast<double>(n));
  return ids;
}

std::vector<int64_t> sample_random(const Table& table, int64_t n,
                                   uint64_t seed, CostLedger* ledger) {
  return sample_random(table.ids(), n, seed, ledger);
}

std::vector<int64_t> sample_topk(const std::vector<float>& query_vec,
                                 const EmbeddingStore& store, int64_t k,
                                 CostLedger* ledger,
                                 const std::vector<int64_t>* pool) {
  if (store.size() == 0) throw DataError("top-k over an empty store");
  if (k <= 0) throw DataError("top-k needs k > 0");
  if (static_cast<int>(query_vec.size()) != store.dim())
    throw DataError("query vector dimension " +
                    std::to_string(query_vec.size()) + " does not match " +
                    std::to_string(store.dim()));
  const std::vector<int64_t>& ids = pool ? *pool : store.ids();
  if (k > static_cast<int64_t>(ids.size()))
    throw DataError("top-k k=" + std::to_string(k) + " exceeds pool of " +
                    std::to_string(ids.size()) + " vectors");

  Eigen::Map<const Eigen::RowVectorXf> q(
      query_vec.data(), static_cast<Eigen::Index>(query_vec.size()));
  std::vector<float> scores(ids.size());
  for (size_t i = 0; i < ids.size(); ++i) scores[i] = store.vec(ids[i]).dot(q);

  std::vector<size_t> order(ids.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  });

  std::vector<int64_t> out(static_cast<size_t>(k));
  for (int64_t i = 0; i < k; ++i)
    out[static_cast<size_t>(i)] = ids[order[static_cast<size_t>(i)]];
  if (ledger)
    ledger->add_sample_flops(
        2.0 * static_cast<double>(ids.size()) * store.dim() +
        static_cast<double>(ids.size()) *
            std::log2(static_cast<double>(ids.size()) + 1.0));
  return out;
}

namespace {

struct ActiveState {
  std::vector<int64_t> ids;   // labeling order
  std::vector<int> labels;
  std::unordered_set<int64_t> taken;
  std::map<int, int64_t> counts;
};

LabeledSample gather_sample(const ActiveState& st, const EmbeddingStore& store) {
  LabeledSample s;
  s.ids = st.ids;
  s.labels = st.labels;
  s.x = MatRXf(static_cast<Eigen::Index>(st.ids.size()), store.dim());
  for (size_t i = 0; i < st.ids.size(); ++i)
    s.x.row(static_cast<Eigen::Index>(i)) = store.vec(st.ids[i]);
  return s;
}

// Lowest class id among the least frequent labels seen so far.
int minority_class(const std::map<int, int64_t>& counts) {
  int64_t best = -1;
  int cls = 0;
  for (const auto& [c, n] : counts)
    if (best < 0 || n < best) {
      best = n;
      cls = c;
    }
  return cls;
}

}  // namespace

ActiveResult sample_active(const Table& table, const EmbeddingStore& store,
                           Oracle& oracle, const std::string& prompt,
                           const std::string& text_column, int64_t n,
                           int64_t batch, uint64_t seed, CostLedger& ledger,
                           const FitOptions& fit_opts,
                           const std::vector<int64_t>* pool_ids) {
  const std::vector<int64_t>& universe = pool_ids ? *pool_ids : table.ids();
  int64_t total = static_cast<int64_t>(universe.size());
  if (batch <= 0) throw DataError("active sampling needs batch > 0");
  if (n < 2 * batch)
    throw DataError("active sampling needs n >= 2*batch, got n=" +
                    std::to_string(n) + " batch=" + std::to_string(batch));
  if (n > total)
    throw DataError("sample size " + std::to_string(n) + " exceeds table of " +
                    std::to_string(total) + " rows");
  for (int64_t id : universe)
    if (!store.has(id))
      throw DataError("active sampling: no embedding for row " +
                      std::to_string(id));

  Rng rng(mix64(seed ^ 0xAC715A3DULL));
  ActiveState st;
  st.ids.reserve(static_cast<size_t>(n));
  ActiveResult out;

  auto label_round = [&](const std::vector<int64_t>& pick) -> bool {
    std::vector<std::string> texts;
    texts.reserve(pick.size());
    for (int64_t id : pick)
      texts.push_back(table.text_cell(table.row_of(id), text_column));
    OracleBatchResult res;
    try {
      res = oracle.label_batch(prompt, pick, texts, /*fallback=*/false, ledger);
    } catch (const TransportError&) {
      out.aborted = true;
      return false;
    }
    out.excluded += res.excluded;
    for (int64_t id : pick) st.taken.insert(id);
    for (const LabeledRow& row : res.labels) {
      st.ids.push_back(row.id);
      st.labels.push_back(row.value);
      st.counts[row.value] += 1;
    }
    out.rounds += 1;
    return true;
  };

  auto random_pick = [&](int64_t want) {
    std::vector<int64_t> pool;
    pool.reserve(static_cast<size_t>(total) - st.taken.size());
    for (int64_t id : universe)
      if (!st.taken.count(id)) pool.push_back(id);
    for (int64_t i = 0; i < want; ++i) {
      int64_t j = i + static_cast<int64_t>(rng.uniform_int(
                          static_cast<uint64_t>(pool.size()) - i));
      std::swap(pool[i], pool[j]);
    }
    pool.resize(static_cast<size_t>(want));
    ledger.add_sample_flops(static_cast<double>(want));
    return pool;
  };

  int64_t budget = n;
  bool first = true;
  while (budget > 0) {
    int64_t want = std::min(batch, budget);
    std::vector<int64_t> pick;

    if (first || st.counts.size() < 2) {
      pick = random_pick(want);
    } else {
      bool trained = false;
      ProxyModel interim;
      try {
        CostLedger scratch;
        interim = fit_logistic(gather_sample(st, store),
                               ImbalanceTechnique{TechniqueKind::Standard},
                               fit_opts, &scratch);
        ledger.add_sample_flops(scratch.train_flops());
        trained = true;
      } catch (const TrainError&) {
        trained = false;
      }
      if (!trained) {
        pick = random_pick(want);
      } else {
        std::vector<int64_t> pool;
        for (int64_t id : universe)
          if (!st.taken.count(id)) pool.push_back(id);
        std::sort(pool.begin(), pool.end());
        MatRXf x(static_cast<Eigen::Index>(pool.size()), store.dim());
        for (size_t i = 0; i < pool.size(); ++i)
          x.row(static_cast<Eigen::Index>(i)) = store.vec(pool[i]);
        Eigen::MatrixXd proba = interim.predict_proba(x);
        ledger.add_interim_scores(
            pool.size(), 2.0 * static_cast<double>(pool.size()) * store.dim() *
                             static_cast<double>(interim.weights.rows()));

        int want_class = minority_class(st.counts);
        Eigen::Index col = 0;
        for (size_t c = 0; c < interim.classes.size(); ++c)
          if (interim.classes[c] == want_class)
            col = static_cast<Eigen::Index>(c);

        std::vector<size_t> order(pool.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
          double pa = proba(static_cast<Eigen::Index>(a), col);
          double pb = proba(static_cast<Eigen::Index>(b), col);
          if (pa != pb) return pa > pb;
          return pool[a] < pool[b];
        });
        pick.reserve(static_cast<size_t>(want));
        for (int64_t i = 0; i < want; ++i)
          pick.push_back(pool[order[static_cast<size_t>(i)]]);
      }
    }

    budget -= static_cast<int64_t>(pick.size());
    first = false;
    if (!label_round(pick)) break;
  }

  out.single_class = st.counts.size() < 2;
  out.sample = gather_sample(st, store);
  return out;
}

}  // namespace proxyq
