#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "proxyq/dataset.hpp"

namespace proxyq {

struct ConfusionCounts {
  std::vector<int64_t> tp, fp, fn, tn;

  int num_classes() const { return static_cast<int>(tp.size()); }
};

// Labels must lie in [0, num_classes); predicted and truth are aligned.
ConfusionCounts confusion_from_labels(const std::vector<int>& predicted,
                                      const std::vector<int>& truth,
                                      int num_classes);

// 2pr/(p+r), defined as 0 when p + r = 0.
double f1_from_counts(int64_t tp, int64_t fp, int64_t fn);
// One-vs-rest F1 of class 1.
double f1_binary(const ConfusionCounts& counts);
// Unweighted mean of per-class one-vs-rest F1.
double macro_f1(const ConfusionCounts& counts);
double accuracy_score(const std::vector<int>& predicted,
                      const std::vector<int>& truth);
// proxy_f1 / llm_f1; throws when llm_f1 <= 0.
double relative_accuracy(double proxy_f1, double llm_f1);

// Graded relevance: gain 2^rel - 1, discount log2(position + 1),
// normalized by the ideal ordering of the full list truncated at k.
// All-zero relevance is 0 by convention. Throws on k <= 0 or negative
// levels.
double ndcg_at_k(const std::vector<int>& ranked_levels, int k);

struct Pca2Result {
  MatRXf projections;                    // n x 2, centered
  Eigen::Vector2d explained_variance;    // top-2 covariance eigenvalues
  Eigen::MatrixXd components;            // 2 x dim, unit rows
};

// Top-2 principal components of the population covariance. Sign
// convention: first nonzero coordinate of each component is positive.
// Requires n >= 3, dim >= 2, and nonzero variance.
Pca2Result pca2(const MatRXf& vectors);

// Mean pairwise distance between class centroids over mean within-class
// population variance (+ 1e-9). Requires >= 2 classes, each with >= 2
// points.
double separability_score(const MatRXf& vectors,
                          const std::vector<int>& labels);

struct SliceRow {
  std::string name;
  int64_t rows = 0;
  double proxy_f1 = 0.0;
  double llm_f1 = 0.0;
  double rel_accuracy = 0.0;
  bool empty = false;
};

// Global row "*" first, then one row per slice in declaration order.
// With gold labels both proxy and oracle are scored against gold;
// without, oracle output is the reference and llm_f1 is 1. Labels are
// aligned with table row order. Slices must partition the table; empty
// slices are flagged, not errors.
std::vector<SliceRow> slice_report(const Table& table,
                                   const std::vector<Slice>& slices,
                                   const std::vector<int>& proxy_labels,
                                   const std::vector<int>& oracle_labels,
                                   const std::vector<int>* gold = nullptr);

nlohmann::json slice_rows_json(const std::vector<SliceRow>& rows);
std::string slice_rows_csv(const std::vector<SliceRow>& rows);

}  // namespace proxyq
