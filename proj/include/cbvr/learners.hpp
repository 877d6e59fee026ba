#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cbvr/core.hpp"
#include "cbvr/quantizers.hpp"

namespace cbvr {

/// score(x) = <w, x> + b, in the raw feature space.
struct LinearModel {
  std::string event_id;
  std::string feature_name;
  std::string classifier = "krr";
  std::vector<double> w;
  double b = 0.0;
  double lambda = 0.0;
};

enum class RidgeSolver { Auto, Primal, Dual };

/// Minimizes sum_i v_i (<w, x_i> + b - y_i)^2 + lambda ||w||^2 with the bias
/// unregularized. Empty `sample_weights` means all ones. Auto picks the dual
/// form when n < d.
LinearModel ridge_train(const RowMatrixD& x, std::span<const double> y, double lambda,
                        std::span<const double> sample_weights = {},
                        RidgeSolver solver = RidgeSolver::Auto);

/// Ridge solutions for several lambdas sharing one eigendecomposition of the
/// (weighted, centered) Gram matrix.
class RidgePath {
 public:
  RidgePath(const RowMatrixD& x, std::span<const double> y, std::span<const double> sample_weights = {});
  /// lambda must be > 0 unless the Gram matrix is non-singular.
  LinearModel solve(double lambda) const;

 private:
  Eigen::VectorXd x_mean_;
  double y_mean_ = 0.0;
  Eigen::MatrixXd eigvecs_;
  Eigen::VectorXd eigvals_;
  Eigen::VectorXd proj_rhs_;  // eigvecs^T Xc^T V yc
};

/// Gradient norm of the ridge objective at (w, b); zero at the optimum.
double ridge_gradient_norm(const RowMatrixD& x, std::span<const double> y, double lambda,
                           const LinearModel& model, std::span<const double> sample_weights = {});

struct KrrModel {
  Eigen::VectorXd alpha;  // (K + lambda I)^-1 y
  double lambda = 0.0;
};

/// K must be symmetric PSD (checked for symmetry to 1e-8 relative) and lambda > 0.
KrrModel krr_train(const Eigen::MatrixXd& kernel, std::span<const double> y, double lambda);
/// Rows of `kernel_rows` are kernel evaluations of test items against training items.
Eigen::VectorXd krr_predict(const Eigen::MatrixXd& kernel_rows, const KrrModel& model);

/// Pegasos-style subgradient descent on lambda/2 ||(w, b)||^2 + mean hinge loss.
/// The bias is carried as an augmented constant feature.
struct SvmResult {
  LinearModel model;
  std::vector<double> objective;  // after each epoch
};
SvmResult svm_train_sgd(const RowMatrixD& x, std::span<const double> y, double lambda, int epochs,
                        std::uint64_t seed);
double svm_objective(const RowMatrixD& x, std::span<const double> y, double lambda, const LinearModel& m);

ScoreList predict_scores(const LinearModel& model, const FeatureMatrix& features);
/// PQ indexes are scored through lookup tables; UQ indexes through decoding.
ScoreList predict_scores(const LinearModel& model, const CompressedIndex& index);

enum class Scenario { SQ, Ex000, Ex010, Ex100 };
Scenario parse_scenario(std::string_view token);
std::string_view to_string(Scenario s);

enum class ClassifierChoice { Krr, Svm, Both };
ClassifierChoice parse_classifier(std::string_view token);

struct TrainSpec {
  std::string event_id;
  std::vector<VideoId> positives;
  std::vector<VideoId> negatives;
  Scenario scenario = Scenario::Ex100;
  ClassifierChoice classifier = ClassifierChoice::Krr;
  void validate() const;
};

struct TrainOptions {
  std::vector<double> lambdas{1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3};
  std::vector<double> svm_lambdas{1e-3, 1e-2, 1e-1};
  int folds = 5;
  int svm_epochs = 10;
  std::uint64_t seed = 0;
};

/// One trained source: a (feature, classifier) pair with its out-of-fold scores.
struct SourceRun {
  std::string name;  // "<feature>:<classifier>"
  LinearModel model;
  std::vector<double> heldout;  // aligned with EventTraining::train_ids
  double cv_ap = 0.0;
};

struct EventTraining {
  std::string event_id;
  std::vector<VideoId> train_ids;  // ascending
  std::vector<std::uint8_t> labels;
  int folds_used = 0;
  std::vector<SourceRun> runs;
};

/// Fold id per training row (stratified, seeded, independent of input order).
std::vector<int> assign_folds(std::span<const std::uint8_t> labels, int folds, std::uint64_t seed);

/// Out-of-fold predictions for one lambda; row i is scored by a model that
/// never saw row i.
std::vector<double> cross_validated_scores(const RowMatrixD& x, std::span<const double> y,
                                           std::span<const int> fold_of, double lambda);

EventTraining train_event(std::span<const FeatureMatrix> features, const TrainSpec& spec,
                          const TrainOptions& options = {});

/// JSON-lines model file; w is base64 of little-endian float32.
std::string format_models_jsonl(std::span<const LinearModel> models);
std::vector<LinearModel> parse_models_jsonl(std::string_view text);

}  // namespace cbvr
