#include "proxyq/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "proxyq/errors.hpp"

namespace proxyq {

ConfusionCounts confusion_from_labels(const std::vector<int>& predicted,
                                      const std::vector<int>& truth,
                                      int num_classes) {
  if (num_classes < 1) throw DataError("confusion counts need >= 1 class");
  if (predicted.size() != truth.size())
    throw DataError("prediction/truth size mismatch: " +
                    std::to_string(predicted.size()) + " vs " +
                    std::to_string(truth.size()));
  ConfusionCounts c;
  c.tp.assign(num_classes, 0);
  c.fp.assign(num_classes, 0);
  c.fn.assign(num_classes, 0);
  c.tn.assign(num_classes, 0);
  const int64_t n = static_cast<int64_t>(truth.size());
  for (size_t i = 0; i < truth.size(); ++i) {
    int p = predicted[i];
    int t = truth[i];
    if (p < 0 || p >= num_classes || t < 0 || t >= num_classes)
      throw DataError("label out of range at position " + std::to_string(i));
    if (p == t) {
      c.tp[p] += 1;
    } else {
      c.fp[p] += 1;
      c.fn[t] += 1;
    }
  }
  for (int k = 0; k < num_classes; ++k)
    c.tn[k] = n - c.tp[k] - c.fp[k] - c.fn[k];
  return c;
}

double f1_from_counts(int64_t tp, int64_t fp, int64_t fn) {
  if (tp < 0 || fp < 0 || fn < 0)
    throw DataError("confusion counts must be nonnegative");
  double denom_p = static_cast<double>(tp + fp);
  double denom_r = static_cast<double>(tp + fn);
  double p = denom_p > 0 ? tp / denom_p : 0.0;
  double r = denom_r > 0 ? tp / denom_r : 0.0;
  if (p + r == 0.0) return 0.0;
  return 2.0 * p * r / (p + r);
}

double f1_binary(const ConfusionCounts& counts) {
  if (counts.num_classes() < 2)
    throw DataError("binary F1 needs counts for 2 classes");
  return f1_from_counts(counts.tp[1], counts.fp[1], counts.fn[1]);
}

double macro_f1(const ConfusionCounts& counts) {
  if (counts.num_classes() == 0) throw DataError("empty confusion counts");
  double sum = 0.0;
  for (int k = 0; k < counts.num_classes(); ++k)
    sum += f1_from_counts(counts.tp[k], counts.fp[k], counts.fn[k]);
  return sum / counts.num_classes();
}

double accuracy_score(const std::vector<int>& predicted,
                      const std::vector<int>& truth) {
  if (predicted.size() != truth.size())
    throw DataError("prediction/truth size mismatch: " +
                    std::to_string(predicted.size()) + " vs " +
                    std::to_string(truth.size()));
  if (truth.empty()) throw DataError("accuracy over empty set");
  size_t hits = 0;
  for (size_t i = 0; i < truth.size(); ++i)
    if (predicted[i] == truth[i]) ++hits;
  return static_cast<double>(hits) / truth.size();
}

double relative_accuracy(double proxy_f1, double llm_f1) {
  if (!(llm_f1 > 0.0))
    throw DataError("relative accuracy undefined: reference F1 is 0");
  return proxy_f1 / llm_f1;
}

namespace {

double dcg_prefix(const std::vector<int>& levels, int k) {
  double s = 0.0;
  size_t upto = std::min<size_t>(levels.size(), static_cast<size_t>(k));
  for (size_t i = 0; i < upto; ++i) {
    double gain = std::pow(2.0, levels[i]) - 1.0;
    s += gain / std::log2(static_cast<double>(i) + 2.0);
  }
  return s;
}

}  // namespace

double ndcg_at_k(const std::vector<int>& ranked_levels, int k) {
  if (k <= 0) throw DataError("ndcg requires k > 0");
  for (int lv : ranked_levels)
    if (lv < 0) throw DataError("relevance levels must be nonnegative");
  if (ranked_levels.empty()) return 0.0;
  std::vector<int> ideal = ranked_levels;
  std::sort(ideal.begin(), ideal.end(), std::greater<int>());
  double idcg = dcg_prefix(ideal, k);
  if (idcg == 0.0) return 0.0;
  return dcg_prefix(ranked_levels, k) / idcg;
}

namespace {

void fix_sign(Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) > 1e-12) {
      if (v(i) < 0) v = -v;
      return;
    }
  }
}

}  // namespace

Pca2Result pca2(const MatRXf& vectors) {
  const Eigen::Index n = vectors.rows();
  const Eigen::Index dim = vectors.cols();
  if (n < 3) throw DataError("pca2 requires at least 3 vectors");
  if (dim < 2) throw DataError("pca2 requires dimension >= 2");
  Eigen::MatrixXd x = vectors.cast<double>();
  Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success)
    throw DataError("pca2: eigendecomposition failed");
  double l1 = es.eigenvalues()(dim - 1);
  double l2 = es.eigenvalues()(dim - 2);
  if (l1 <= 1e-12) throw DataError("pca2: data has zero variance");
  Eigen::VectorXd v1 = es.eigenvectors().col(dim - 1);
  Eigen::VectorXd v2 = es.eigenvectors().col(dim - 2);
  fix_sign(v1);
  fix_sign(v2);
  Pca2Result r;
  r.explained_variance = Eigen::Vector2d(l1, l2);
  r.components.resize(2, dim);
  r.components.row(0) = v1.transpose();
  r.components.row(1) = v2.transpose();
  Eigen::MatrixXd proj(n, 2);
  proj.col(0) = x * v1;
  proj.col(1) = x * v2;
  r.projections = proj.cast<float>();
  return r;
}

double separability_score(const MatRXf& vectors,
                          const std::vector<int>& labels) {
  if (static_cast<size_t>(vectors.rows()) != labels.size())
    throw DataError("separability: vector/label count mismatch");
  int num_classes = 0;
  for (int lb : labels) {
    if (lb < 0) throw DataError("separability: negative class label");
    num_classes = std::max(num_classes, lb + 1);
  }
  std::vector<int64_t> count(num_classes, 0);
  for (int lb : labels) count[lb] += 1;
  int populated = 0;
  for (int k = 0; k < num_classes; ++k) {
    if (count[k] == 0) continue;
    if (count[k] < 2)
      throw DataError("separability: class " + std::to_string(k) +
                      " has fewer than 2 points");
    ++populated;
  }
  if (populated < 2)
    throw DataError("separability requires at least 2 classes");

  const Eigen::Index dim = vectors.cols();
  Eigen::MatrixXd centroids = Eigen::MatrixXd::Zero(num_classes, dim);
  for (size_t i = 0; i < labels.size(); ++i)
    centroids.row(labels[i]) += vectors.row(static_cast<Eigen::Index>(i))
                                    .cast<double>();
  for (int k = 0; k < num_classes; ++k)
    if (count[k] > 0) centroids.row(k) /= static_cast<double>(count[k]);

  double var_sum = 0.0;
  std::vector<double> var(num_classes, 0.0);
  for (size_t i = 0; i < labels.size(); ++i) {
    int k = labels[i];
    var[k] += (vectors.row(static_cast<Eigen::Index>(i)).cast<double>() -
               centroids.row(k))
                  .squaredNorm();
  }
  for (int k = 0; k < num_classes; ++k) {
    if (count[k] == 0) continue;
    var_sum += var[k] / static_cast<double>(count[k]);
  }
  double mean_var = var_sum / populated;

  double dist_sum = 0.0;
  int64_t pairs = 0;
  for (int a = 0; a < num_classes; ++a) {
    if (count[a] == 0) continue;
    for (int b = a + 1; b < num_classes; ++b) {
      if (count[b] == 0) continue;
      dist_sum += (centroids.row(a) - centroids.row(b)).norm();
      ++pairs;
    }
  }
  return (dist_sum / pairs) / (mean_var + 1e-9);
}

namespace {

SliceRow score_rows(const std::string& name, const std::vector<size_t>& rows,
                    const std::vector<int>& proxy,
                    const std::vector<int>& oracle,
                    const std::vector<int>* gold, int num_classes) {
  SliceRow out;
  out.name = name;
  out.rows = static_cast<int64_t>(rows.size());
  if (rows.empty()) {
    out.empty = true;
    return out;
  }
  std::vector<int> p, o, g;
  p.reserve(rows.size());
  o.reserve(rows.size());
  if (gold) g.reserve(rows.size());
  for (size_t r : rows) {
    p.push_back(proxy[r]);
    o.push_back(oracle[r]);
    if (gold) g.push_back((*gold)[r]);
  }
  if (gold) {
    out.proxy_f1 = macro_f1(confusion_from_labels(p, g, num_classes));
    out.llm_f1 = macro_f1(confusion_from_labels(o, g, num_classes));
  } else {
    out.proxy_f1 = macro_f1(confusion_from_labels(p, o, num_classes));
    out.llm_f1 = 1.0;
  }
  out.rel_accuracy =
      out.llm_f1 > 0.0 ? out.proxy_f1 / out.llm_f1 : 0.0;
  return out;
}

}  // namespace

std::vector<SliceRow> slice_report(const Table& table,
                                   const std::vector<Slice>& slices,
                                   const std::vector<int>& proxy_labels,
                                   const std::vector<int>& oracle_labels,
                                   const std::vector<int>* gold) {
  if (proxy_labels.size() != table.n_rows() ||
      oracle_labels.size() != table.n_rows())
    throw DataError("slice report: label vectors must cover every row");
  if (gold && gold->size() != table.n_rows())
    throw DataError("slice report: gold labels must cover every row");
  check_partition(table, slices);

  int num_classes = 1;
  auto widen = [&](const std::vector<int>& v) {
    for (int lb : v) {
      if (lb < 0) throw DataError("slice report: negative class label");
      num_classes = std::max(num_classes, lb + 1);
    }
  };
  widen(proxy_labels);
  widen(oracle_labels);
  if (gold) widen(*gold);

  std::vector<SliceRow> out;
  std::vector<size_t> all(table.n_rows());
  for (size_t i = 0; i < all.size(); ++i) all[i] = i;
  out.push_back(score_rows("*", all, proxy_labels, oracle_labels, gold,
                           num_classes));
  for (const Slice& s : slices) {
    std::vector<size_t> rows;
    for (size_t r = 0; r < table.n_rows(); ++r)
      if (row_matches(table, r, s.predicate)) rows.push_back(r);
    out.push_back(score_rows(s.name, rows, proxy_labels, oracle_labels,
                             gold, num_classes));
  }
  return out;
}

nlohmann::json slice_rows_json(const std::vector<SliceRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const SliceRow& r : rows) {
    arr.push_back({{"slice", r.name},
                   {"rows", r.rows},
                   {"proxy_f1", r.proxy_f1},
                   {"llm_f1", r.llm_f1},
                   {"relative_accuracy", r.rel_accuracy},
                   {"empty", r.empty}});
  }
  return arr;
}

std::string slice_rows_csv(const std::vector<SliceRow>& rows) {
  std::string s = "slice,rows,proxy_f1,llm_f1,relative_accuracy,empty\n";
  for (const SliceRow& r : rows) {
    s += r.name + "," + std::to_string(r.rows) + "," +
         std::to_string(r.proxy_f1) + "," + std::to_string(r.llm_f1) + "," +
         std::to_string(r.rel_accuracy) + "," + (r.empty ? "1" : "0") + "\n";
  }
  return s;
}

}  // namespace proxyq
