#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"

#include "proxyq/dataset.hpp"
#include "proxyq/ledger.hpp"

namespace proxyq {

struct LabeledSample {
  std::vector<int64_t> ids;  // synthetic rows carry negative ids
  MatRXf x;                  // n x dim
  std::vector<int> labels;

  size_t size() const { return labels.size(); }
  std::map<int, int64_t> class_counts() const;
};

// max count / min count over populated classes; throws on < 2 classes.
double imbalance_ratio(const std::map<int, int64_t>& counts);

enum class TechniqueKind { Standard, Balanced, Downsample, Bootstrap, Smote };

std::string technique_name(TechniqueKind k);
TechniqueKind parse_technique(const std::string& name);

struct ImbalanceTechnique {
  TechniqueKind kind = TechniqueKind::Balanced;
  int smote_k = 5;
  double target_ratio = 1.0;  // post-resample max/min bound
};

// weight_c = total / (num_classes * count_c); throws on a zero count.
std::map<int, double> class_weights_balanced(
    const std::map<int, int64_t>& counts);

// balanced unless the minority class is small: <= minority_floor picks
// smote, < 2 degrades to bootstrap. Single-class counts throw.
ImbalanceTechnique choose_technique(const std::map<int, int64_t>& counts,
                                    int minority_floor = 100);

LabeledSample resample_downsample(const LabeledSample& s, double target_ratio,
                                  uint64_t seed);
LabeledSample resample_bootstrap(const LabeledSample& s, double target_ratio,
                                 uint64_t seed);

struct SmoteOrigin {
  size_t src_row = 0;  // index into the input sample
  size_t nn_row = 0;
  double u = 0.0;
  int label = 0;
};

// Interpolates x_src + u * (x_nn - x_src) with x_nn one of the smote_k
// nearest same-class neighbors. Classes being upsampled need >= 2
// members. Synthetic rows get negative ids.
LabeledSample resample_smote(const LabeledSample& s, double target_ratio,
                             int smote_k, uint64_t seed,
                             std::vector<SmoteOrigin>* provenance = nullptr);

struct TrainMeta {
  int64_t sample_size = 0;               // pre-resample
  std::map<int, int64_t> class_counts;   // pre-resample
  uint64_t seed = 0;
  std::optional<double> agreement_on_sample;
  bool converged = false;
  int iterations = 0;
  double final_objective = 0.0;
};

struct ProxyModel {
  std::vector<int> classes;  // ascending; column order of predict_proba
  Eigen::MatrixXd weights;   // binary: 1 x dim; multi: classes x dim
  Eigen::VectorXd bias;
  int dim = 0;
  ImbalanceTechnique technique;
  TrainMeta train_meta;

  // per OVR subproblem, recorded during fit; not persisted
  std::vector<std::vector<double>> objective_histories;

  bool is_binary() const { return classes.size() == 2; }
  // n x classes, rows sum to 1
  Eigen::MatrixXd predict_proba(const MatRXf& vecs) const;
  std::vector<int> predict_class(const MatRXf& vecs) const;
};

struct FitOptions {
  double reg_lambda = -1.0;  // < 0 picks 1/(2N)
  double tol = 1e-4;         // gradient infinity norm
  int max_iter = 1000;
  uint64_t seed = 42;
};

// Full-batch gradient descent with backtracking line search on the
// weighted cross-entropy objective (1/N) sum w_{y_i} ce_i + lambda|W|^2,
// bias unregularized. Multi-class is one-vs-rest with score
// normalization. Throws TrainError on single-class samples.
ProxyModel fit_logistic(const LabeledSample& sample,
                        const ImbalanceTechnique& technique,
                        const FitOptions& opts = {},
                        CostLedger* ledger = nullptr);

// Objective/gradient kernel for one binary subproblem; exposed so the
// finite-difference checks probe exactly what the optimizer descends.
double weighted_lr_objective(const Eigen::MatrixXd& x,
                             const std::vector<int>& targets01,
                             const std::vector<double>& row_weights,
                             const Eigen::VectorXd& w, double b,
                             double lambda);
Eigen::VectorXd weighted_lr_gradient(const Eigen::MatrixXd& x,
                                     const std::vector<int>& targets01,
                                     const std::vector<double>& row_weights,
                                     const Eigen::VectorXd& w, double b,
                                     double lambda, double* grad_b);

nlohmann::json model_to_json(const ProxyModel& m);
ProxyModel model_from_json(const nlohmann::json& j);
void save_model(const ProxyModel& m, const std::string& path);
ProxyModel load_model(const std::string& path);

}  // namespace proxyq
