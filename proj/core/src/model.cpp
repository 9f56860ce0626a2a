#include "proxyq/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "proxyq/errors.hpp"
#include "proxyq/jsonl.hpp"
#include "proxyq/rng.hpp"
#include "proxyq/version.hpp"

namespace proxyq {

using nlohmann::json;

std::map<int, int64_t> LabeledSample::class_counts() const {
  std::map<int, int64_t> c;
  for (int lb : labels) c[lb] += 1;
  return c;
}

double imbalance_ratio(const std::map<int, int64_t>& counts) {
  int64_t lo = 0, hi = 0;
  int populated = 0;
  for (const auto& [cls, n] : counts) {
    if (n <= 0) continue;
    if (populated == 0) lo = hi = n;
    lo = std::min(lo, n);
    hi = std::max(hi, n);
    ++populated;
  }
  if (populated < 2)
    throw DataError("undefined imbalance ratio: fewer than 2 classes");
  return static_cast<double>(hi) / static_cast<double>(lo);
}

std::string technique_name(TechniqueKind k) {
  switch (k) {
    case TechniqueKind::Standard: return "standard";
    case TechniqueKind::Balanced: return "balanced";
    case TechniqueKind::Downsample: return "downsample";
    case TechniqueKind::Bootstrap: return "bootstrap";
    case TechniqueKind::Smote: return "smote";
  }
  throw DataError("unreachable technique kind");
}

TechniqueKind parse_technique(const std::string& name) {
  if (name == "standard") return TechniqueKind::Standard;
  if (name == "balanced") return TechniqueKind::Balanced;
  if (name == "downsample") return TechniqueKind::Downsample;
  if (name == "bootstrap") return TechniqueKind::Bootstrap;
  if (name == "smote") return TechniqueKind::Smote;
  throw DataError("unknown imbalance technique: " + name);
}

std::map<int, double> class_weights_balanced(
    const std::map<int, int64_t>& counts) {
  if (counts.empty()) throw DataError("class weights need counts");
  int64_t total = 0;
  for (const auto& [cls, n] : counts) {
    if (n <= 0)
      throw DataError("class " + std::to_string(cls) + " has zero count");
    total += n;
  }
  std::map<int, double> w;
  for (const auto& [cls, n] : counts)
    w[cls] = static_cast<double>(total) /
             (static_cast<double>(counts.size()) * static_cast<double>(n));
  return w;
}

ImbalanceTechnique choose_technique(const std::map<int, int64_t>& counts,
                                    int minority_floor) {
  int populated = 0;
  int64_t minority = 0;
  for (const auto& [cls, n] : counts) {
    if (n <= 0) continue;
    minority = populated == 0 ? n : std::min(minority, n);
    ++populated;
  }
  if (populated < 2)
    throw TrainError("single-class sample: cannot train a proxy");
  ImbalanceTechnique t;
  if (minority < 2)
    t.kind = TechniqueKind::Bootstrap;
  else if (minority <= minority_floor)
    t.kind = TechniqueKind::Smote;
  else
    t.kind = TechniqueKind::Balanced;
  return t;
}

namespace {

void validate_sample(const LabeledSample& s) {
  if (s.labels.empty()) throw TrainError("empty training sample");
  if (s.ids.size() != s.labels.size() ||
      static_cast<size_t>(s.x.rows()) != s.labels.size())
    throw DataError("sample rows, ids, and labels must align");
  if (!s.x.allFinite())
    throw DataError("sample embeddings contain non-finite values");
}

std::map<int, std::vector<size_t>> rows_by_class(const LabeledSample& s) {
  std::map<int, std::vector<size_t>> by;
  for (size_t i = 0; i < s.labels.size(); ++i) by[s.labels[i]].push_back(i);
  return by;
}

LabeledSample gather(const LabeledSample& s,
                     const std::vector<size_t>& rows) {
  LabeledSample out;
  out.ids.reserve(rows.size());
  out.labels.reserve(rows.size());
  out.x.resize(static_cast<Eigen::Index>(rows.size()), s.x.cols());
  for (size_t i = 0; i < rows.size(); ++i) {
    out.ids.push_back(s.ids[rows[i]]);
    out.labels.push_back(s.labels[rows[i]]);
    out.x.row(static_cast<Eigen::Index>(i)) =
        s.x.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

}  // namespace

LabeledSample resample_downsample(const LabeledSample& s, double target_ratio,
                                  uint64_t seed) {
  validate_sample(s);
  if (target_ratio < 1.0)
    throw DataError("target_ratio must be >= 1");
  auto by = rows_by_class(s);
  int64_t minority = 0;
  bool first = true;
  for (const auto& [cls, rows] : by) {
    int64_t n = static_cast<int64_t>(rows.size());
    minority = first ? n : std::min(minority, n);
    first = false;
  }
  int64_t cap = static_cast<int64_t>(std::floor(minority * target_ratio));
  cap = std::max(cap, minority);
  Rng rng(mix64(seed ^ 0xD05AULL));
  std::vector<size_t> keep;
  for (auto& [cls, rows] : by) {
    if (static_cast<int64_t>(rows.size()) > cap) {
      rng.shuffle(rows);
      rows.resize(static_cast<size_t>(cap));
      std::sort(rows.begin(), rows.end());
    }
    keep.insert(keep.end(), rows.begin(), rows.end());
  }
  std::sort(keep.begin(), keep.end());
  return gather(s, keep);
}

LabeledSample resample_bootstrap(const LabeledSample& s, double target_ratio,
                                 uint64_t seed) {
  validate_sample(s);
  if (target_ratio < 1.0)
    throw DataError("target_ratio must be >= 1");
  auto by = rows_by_class(s);
  int64_t majority = 0;
  for (const auto& [cls, rows] : by)
    majority = std::max(majority, static_cast<int64_t>(rows.size()));
  int64_t need = static_cast<int64_t>(std::ceil(majority / target_ratio));
  Rng rng(mix64(seed ^ 0xB007ULL));
  std::vector<size_t> keep(s.labels.size());
  std::iota(keep.begin(), keep.end(), size_t{0});
  for (const auto& [cls, rows] : by) {
    int64_t have = static_cast<int64_t>(rows.size());
    for (int64_t i = have; i < need; ++i)
      keep.push_back(rows[rng.uniform_int(rows.size())]);
  }
  return gather(s, keep);
}

LabeledSample resample_smote(const LabeledSample& s, double target_ratio,
                             int smote_k, uint64_t seed,
                             std::vector<SmoteOrigin>* provenance) {
  validate_sample(s);
  if (target_ratio < 1.0)
    throw DataError("target_ratio must be >= 1");
  if (smote_k < 1) throw DataError("smote_k must be >= 1");
  auto by = rows_by_class(s);
  int64_t majority = 0;
  for (const auto& [cls, rows] : by)
    majority = std::max(majority, static_cast<int64_t>(rows.size()));
  int64_t need = static_cast<int64_t>(std::ceil(majority / target_ratio));

  LabeledSample out = s;
  Rng rng(mix64(seed ^ 0x50F7ULL));
  int64_t synth_id = -1;
  std::vector<std::pair<std::vector<float>, int>> extra;
  for (const auto& [cls, rows] : by) {
    int64_t have = static_cast<int64_t>(rows.size());
    if (have >= need) continue;
    if (have < 2)
      throw TrainError("smote requires >= 2 examples of class " +
                       std::to_string(cls));
    // nearest same-class neighbors by Euclidean distance, ties by
    // ascending row index
    size_t k = std::min<size_t>(static_cast<size_t>(smote_k),
                                rows.size() - 1);
    std::vector<std::vector<size_t>> nn(rows.size());
    for (size_t a = 0; a < rows.size(); ++a) {
      std::vector<std::pair<double, size_t>> d;
      for (size_t b = 0; b < rows.size(); ++b) {
        if (a == b) continue;
        double dist = (s.x.row(static_cast<Eigen::Index>(rows[a])) -
                       s.x.row(static_cast<Eigen::Index>(rows[b])))
                          .squaredNorm();
        d.emplace_back(dist, rows[b]);
      }
      std::sort(d.begin(), d.end());
      for (size_t j = 0; j < k; ++j) nn[a].push_back(d[j].second);
    }
    for (int64_t i = have; i < need; ++i) {
      size_t a = static_cast<size_t>(rng.uniform_int(rows.size()));
      size_t b = nn[a][rng.uniform_int(nn[a].size())];
      double u = rng.uniform();
      Eigen::RowVectorXf xa = s.x.row(static_cast<Eigen::Index>(rows[a]));
      Eigen::RowVectorXf xb = s.x.row(static_cast<Eigen::Index>(b));
      Eigen::RowVectorXf v = xa + static_cast<float>(u) * (xb - xa);
      extra.emplace_back(std::vector<float>(v.data(), v.data() + v.size()),
                         cls);
      if (provenance) provenance->push_back({rows[a], b, u, cls});
    }
  }
  Eigen::Index base = out.x.rows();
  MatRXf grown(base + static_cast<Eigen::Index>(extra.size()), out.x.cols());
  grown.topRows(base) = out.x;
  for (size_t i = 0; i < extra.size(); ++i) {
    for (Eigen::Index j = 0; j < out.x.cols(); ++j)
      grown(base + static_cast<Eigen::Index>(i), j) =
          extra[i].first[static_cast<size_t>(j)];
    out.ids.push_back(synth_id--);
    out.labels.push_back(extra[i].second);
  }
  out.x = std::move(grown);
  return out;
}

namespace {

double softplus(double z) {
  if (z > 0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

double weighted_lr_objective(const Eigen::MatrixXd& x,
                             const std::vector<int>& targets01,
                             const std::vector<double>& row_weights,
                             const Eigen::VectorXd& w, double b,
                             double lambda) {
  const Eigen::Index n = x.rows();
  Eigen::VectorXd z = x * w;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double zi = z(i) + b;
    acc += row_weights[static_cast<size_t>(i)] *
           (softplus(zi) - targets01[static_cast<size_t>(i)] * zi);
  }
  return acc / static_cast<double>(n) + lambda * w.squaredNorm();
}

Eigen::VectorXd weighted_lr_gradient(const Eigen::MatrixXd& x,
                                     const std::vector<int>& targets01,
                                     const std::vector<double>& row_weights,
                                     const Eigen::VectorXd& w, double b,
                                     double lambda, double* grad_b) {
  const Eigen::Index n = x.rows();
  Eigen::VectorXd z = x * w;
  Eigen::VectorXd r(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double p = sigmoid(z(i) + b);
    r(i) = row_weights[static_cast<size_t>(i)] *
           (p - targets01[static_cast<size_t>(i)]);
  }
  Eigen::VectorXd g =
      (x.transpose() * r) / static_cast<double>(n) + 2.0 * lambda * w;
  if (grad_b) *grad_b = r.sum() / static_cast<double>(n);
  return g;
}

namespace {

struct BinaryFit {
  Eigen::VectorXd w;
  double b = 0.0;
  bool converged = false;
  int iterations = 0;
  std::vector<double> history;
  int64_t evals = 0;
};

BinaryFit fit_binary(const Eigen::MatrixXd& x,
                     const std::vector<int>& targets01,
                     const std::vector<double>& row_weights, double lambda,
                     double tol, int max_iter) {
  BinaryFit fit;
  fit.w = Eigen::VectorXd::Zero(x.cols());
  double alpha = 1.0;
  double obj = weighted_lr_objective(x, targets01, row_weights, fit.w,
                                     fit.b, lambda);
  fit.evals += 1;
  for (int it = 0; it < max_iter; ++it) {
    fit.history.push_back(obj);
    double gb = 0.0;
    Eigen::VectorXd g = weighted_lr_gradient(x, targets01, row_weights,
                                             fit.w, fit.b, lambda, &gb);
    fit.evals += 1;
    double gnorm = std::max(g.cwiseAbs().maxCoeff(), std::abs(gb));
    if (gnorm <= tol) {
      fit.converged = true;
      fit.iterations = it;
      return fit;
    }
    double slope = g.squaredNorm() + gb * gb;
    double step = std::min(alpha * 2.0, 1e6);
    bool moved = false;
    while (step > 1e-18) {
      Eigen::VectorXd wn = fit.w - step * g;
      double bn = fit.b - step * gb;
      double candidate =
          weighted_lr_objective(x, targets01, row_weights, wn, bn, lambda);
      fit.evals += 1;
      if (candidate <= obj - 1e-4 * step * slope) {
        fit.w = std::move(wn);
        fit.b = bn;
        obj = candidate;
        alpha = step;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    fit.iterations = it + 1;
    if (!moved) return fit;  // no descent step representable
  }
  if (fit.history.empty() || fit.history.back() != obj)
    fit.history.push_back(obj);
  return fit;
}

}  // namespace

ProxyModel fit_logistic(const LabeledSample& sample,
                        const ImbalanceTechnique& technique,
                        const FitOptions& opts, CostLedger* ledger) {
  validate_sample(sample);
  std::map<int, int64_t> original_counts = sample.class_counts();
  if (original_counts.size() < 2)
    throw TrainError("single-class sample: cannot train a proxy");

  LabeledSample resampled;
  const LabeledSample* train = &sample;
  switch (technique.kind) {
    case TechniqueKind::Downsample:
      resampled =
          resample_downsample(sample, technique.target_ratio, opts.seed);
      train = &resampled;
      break;
    case TechniqueKind::Bootstrap:
      resampled =
          resample_bootstrap(sample, technique.target_ratio, opts.seed);
      train = &resampled;
      break;
    case TechniqueKind::Smote:
      resampled = resample_smote(sample, technique.target_ratio,
                                 technique.smote_k, opts.seed);
      train = &resampled;
      break;
    case TechniqueKind::Standard:
    case TechniqueKind::Balanced:
      break;
  }

  const size_t n = train->size();
  std::vector<double> row_weights(n, 1.0);
  if (technique.kind == TechniqueKind::Balanced) {
    std::map<int, double> cw = class_weights_balanced(train->class_counts());
    for (size_t i = 0; i < n; ++i) row_weights[i] = cw[train->labels[i]];
  }

  double lambda = opts.reg_lambda >= 0
                      ? opts.reg_lambda
                      : 1.0 / (2.0 * static_cast<double>(n));

  ProxyModel m;
  for (const auto& [cls, cnt] : original_counts) m.classes.push_back(cls);
  m.dim = static_cast<int>(train->x.cols());
  m.technique = technique;
  m.train_meta.sample_size = static_cast<int64_t>(sample.size());
  m.train_meta.class_counts = original_counts;
  m.train_meta.seed = opts.seed;

  Eigen::MatrixXd x = train->x.cast<double>();
  int64_t evals = 0;
  auto run = [&](int positive_class) {
    std::vector<int> t01(n, 0);
    for (size_t i = 0; i < n; ++i)
      t01[i] = train->labels[i] == positive_class ? 1 : 0;
    BinaryFit f = fit_binary(x, t01, row_weights, lambda, opts.tol,
                             opts.max_iter);
    evals += f.evals;
    return f;
  };

  if (m.classes.size() == 2) {
    BinaryFit f = run(m.classes[1]);
    m.weights.resize(1, m.dim);
    m.weights.row(0) = f.w.transpose();
    m.bias.resize(1);
    m.bias(0) = f.b;
    m.train_meta.converged = f.converged;
    m.train_meta.iterations = f.iterations;
    m.train_meta.final_objective =
        f.history.empty() ? 0.0 : f.history.back();
    m.objective_histories.push_back(std::move(f.history));
  } else {
    m.weights.resize(static_cast<Eigen::Index>(m.classes.size()), m.dim);
    m.bias.resize(static_cast<Eigen::Index>(m.classes.size()));
    m.train_meta.converged = true;
    double obj_sum = 0.0;
    for (size_t c = 0; c < m.classes.size(); ++c) {
      BinaryFit f = run(m.classes[c]);
      m.weights.row(static_cast<Eigen::Index>(c)) = f.w.transpose();
      m.bias(static_cast<Eigen::Index>(c)) = f.b;
      m.train_meta.converged = m.train_meta.converged && f.converged;
      m.train_meta.iterations =
          std::max(m.train_meta.iterations, f.iterations);
      obj_sum += f.history.empty() ? 0.0 : f.history.back();
      m.objective_histories.push_back(std::move(f.history));
    }
    m.train_meta.final_objective = obj_sum;
  }

  if (ledger) {
    // each objective or gradient eval streams the n x dim matrix twice
    int64_t flops = evals * 4 * static_cast<int64_t>(n) * m.dim;
    ledger->add_train_flops(flops);
  }
  return m;
}

Eigen::MatrixXd ProxyModel::predict_proba(const MatRXf& vecs) const {
  if (static_cast<int>(vecs.cols()) != dim)
    throw DataError("model dim " + std::to_string(dim) +
                    " does not match vectors dim " +
                    std::to_string(vecs.cols()));
  const Eigen::Index n = vecs.rows();
  Eigen::MatrixXd x = vecs.cast<double>();
  Eigen::MatrixXd out(n, static_cast<Eigen::Index>(classes.size()));
  if (is_binary()) {
    Eigen::VectorXd z = x * weights.row(0).transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
      double p = sigmoid(z(i) + bias(0));
      out(i, 0) = 1.0 - p;
      out(i, 1) = p;
    }
  } else {
    Eigen::MatrixXd z =
        (x * weights.transpose()).rowwise() + bias.transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
      double sum = 0.0;
      for (Eigen::Index c = 0; c < z.cols(); ++c) {
        double s = sigmoid(z(i, c));
        out(i, c) = s;
        sum += s;
      }
      out.row(i) /= sum;
    }
  }
  return out;
}

std::vector<int> ProxyModel::predict_class(const MatRXf& vecs) const {
  Eigen::MatrixXd p = predict_proba(vecs);
  std::vector<int> out;
  out.reserve(static_cast<size_t>(p.rows()));
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    Eigen::Index best = 0;
    p.row(i).maxCoeff(&best);
    out.push_back(classes[static_cast<size_t>(best)]);
  }
  return out;
}

json model_to_json(const ProxyModel& m) {
  json weights = json::array();
  for (Eigen::Index r = 0; r < m.weights.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.weights.cols(); ++c)
      row.push_back(m.weights(r, c));
    weights.push_back(std::move(row));
  }
  json bias = json::array();
  for (Eigen::Index i = 0; i < m.bias.size(); ++i)
    bias.push_back(m.bias(i));
  json counts = json::object();
  for (const auto& [cls, n] : m.train_meta.class_counts)
    counts[std::to_string(cls)] = n;
  json meta = {
      {"sample_size", m.train_meta.sample_size},
      {"class_counts", std::move(counts)},
      {"seed", m.train_meta.seed},
      {"converged", m.train_meta.converged},
      {"iterations", m.train_meta.iterations},
      {"final_objective", m.train_meta.final_objective},
  };
  meta["agreement_on_sample"] =
      m.train_meta.agreement_on_sample
          ? json(*m.train_meta.agreement_on_sample)
          : json(nullptr);
  return json{
      {"version", kModelFormatVersion},
      {"classes", m.classes},
      {"dim", m.dim},
      {"weights", std::move(weights)},
      {"bias", std::move(bias)},
      {"technique",
       {{"kind", technique_name(m.technique.kind)},
        {"smote_k", m.technique.smote_k},
        {"target_ratio", m.technique.target_ratio}}},
      {"train_meta", std::move(meta)},
  };
}

ProxyModel model_from_json(const json& j) {
  if (!j.is_object() || !j.contains("version") ||
      !j["version"].is_number_integer())
    throw DataError("corrupted model file: missing version");
  if (j["version"].get<int>() != kModelFormatVersion)
    throw DataError("unsupported model format version " +
                    j["version"].dump());
  ProxyModel m;
  try {
    m.classes = j.at("classes").get<std::vector<int>>();
    m.dim = j.at("dim").get<int>();
    const json& w = j.at("weights");
    m.weights.resize(static_cast<Eigen::Index>(w.size()), m.dim);
    for (size_t r = 0; r < w.size(); ++r) {
      if (static_cast<int>(w[r].size()) != m.dim)
        throw DataError("corrupted model file: ragged weights");
      for (int c = 0; c < m.dim; ++c)
        m.weights(static_cast<Eigen::Index>(r), c) = w[r][static_cast<size_t>(c)].get<double>();
    }
    const json& b = j.at("bias");
    m.bias.resize(static_cast<Eigen::Index>(b.size()));
    for (size_t i = 0; i < b.size(); ++i)
      m.bias(static_cast<Eigen::Index>(i)) = b[i].get<double>();
    const json& t = j.at("technique");
    m.technique.kind = parse_technique(t.at("kind").get<std::string>());
    m.technique.smote_k = t.at("smote_k").get<int>();
    m.technique.target_ratio = t.at("target_ratio").get<double>();
    const json& meta = j.at("train_meta");
    m.train_meta.sample_size = meta.at("sample_size").get<int64_t>();
    for (const auto& [key, val] : meta.at("class_counts").items())
      m.train_meta.class_counts[std::stoi(key)] = val.get<int64_t>();
    m.train_meta.seed = meta.at("seed").get<uint64_t>();
    m.train_meta.converged = meta.at("converged").get<bool>();
    m.train_meta.iterations = meta.at("iterations").get<int>();
    m.train_meta.final_objective = meta.at("final_objective").get<double>();
    if (!meta.at("agreement_on_sample").is_null())
      m.train_meta.agreement_on_sample =
          meta.at("agreement_on_sample").get<double>();
  } catch (const json::exception& e) {
    throw DataError(std::string("corrupted model file: ") + e.what());
  }
  if (m.classes.size() < 2)
    throw DataError("corrupted model file: fewer than 2 classes");
  size_t expect_rows = m.classes.size() == 2 ? 1 : m.classes.size();
  if (static_cast<size_t>(m.weights.rows()) != expect_rows ||
      m.bias.size() != static_cast<Eigen::Index>(expect_rows))
    throw DataError("corrupted model file: parameter shape mismatch");
  if (!m.weights.allFinite() || !m.bias.allFinite())
    throw DataError("corrupted model file: non-finite parameters");
  return m;
}

void save_model(const ProxyModel& m, const std::string& path) {
  write_text_file(path, model_to_json(m).dump(2) + "\n");
}

ProxyModel load_model(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw DataError("corrupted model file " + path + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace proxyq
