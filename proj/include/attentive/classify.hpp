#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "attentive/encoder.hpp"

namespace attentive {

struct DatasetRow {
  std::vector<double> x;
  int label = 0;  // 0 or 1
  std::string text;
  std::string id;
};

struct Dataset {
  std::vector<DatasetRow> rows;
  std::string encoder_fingerprint;

  std::size_t dimension() const { return rows.empty() ? 0 : rows.front().x.size(); }
  std::size_t count(int label) const;
  Dataset subset(std::span<const std::size_t> indices) const;
};

enum class Algorithm { kLogisticRegression, kLinearSvm, kAdaBoost, kNaiveBayes };

inline constexpr std::array<Algorithm, 4> kAllAlgorithms{
    Algorithm::kLogisticRegression, Algorithm::kLinearSvm, Algorithm::kAdaBoost,
    Algorithm::kNaiveBayes};

/// Short tag used in files and on the command line: logreg, svm, adaboost, nb.
std::string_view algorithm_tag(Algorithm a);
/// Display name used in reports, e.g. "Logistic Regression".
std::string_view algorithm_display_name(Algorithm a);
std::optional<Algorithm> parse_algorithm(std::string_view tag);

struct Hyperparams {
  double l2 = 1e-3;
  int max_epochs = 1000;
  double grad_tol = 1e-6;
  /// Share of training rows held out to calibrate the SVM.
  double calibration_holdout = 0.2;
  int boosting_rounds = 100;
  double variance_floor = 1e-6;

  bool operator==(const Hyperparams&) const = default;
};

struct DecisionStump {
  std::size_t feature = 0;
  double threshold = 0.0;
  /// +1: predicts positive when x[feature] > threshold; -1: the reverse.
  int polarity = 1;
  double weight = 0.0;

  bool operator==(const DecisionStump&) const = default;
};

/// Platt sigmoid: P(y=1 | f) = 1 / (1 + exp(a*f + b)).
struct SigmoidCalibration {
  double a = -1.0;
  double b = 0.0;

  bool operator==(const SigmoidCalibration&) const = default;
};

struct GaussianClass {
  std::vector<double> mean;
  std::vector<double> variance;
  double log_prior = 0.0;

  bool operator==(const GaussianClass&) const = default;
};

class BinaryClassifier {
 public:
  Algorithm algorithm = Algorithm::kLogisticRegression;
  std::size_t dimension = 0;
  std::vector<double> weights;
  double bias = 0.0;
  std::optional<SigmoidCalibration> calibration;
  std::vector<DecisionStump> stumps;
  GaussianClass negative;
  GaussianClass positive;
  std::string encoder_fingerprint;
  std::size_t trained_on = 0;
  Hyperparams hyperparams;
  std::uint64_t seed = 0;

  /// Raw score before the probability link (margin for linear models).
  double decision_value(std::span<const double> x) const;

  /// Probability of the positive class, always within [0, 1]. Checks the
  /// embedding's dimension and fingerprint against the model.
  double predict_proba(const Embedding& v) const;
  /// Same, for raw feature rows that carry no fingerprint (training data).
  double predict_proba_raw(std::span<const double> x) const;

  std::string to_json() const;
  /// Refuses files of another format version and, when expected_fingerprint
  /// is non-empty, models trained under a different encoder.
  static BinaryClassifier from_json(std::string_view text,
                                    std::string_view expected_fingerprint = {});
  static BinaryClassifier load(const std::string& path,
                               std::string_view expected_fingerprint = {});

  bool operator==(const BinaryClassifier&) const = default;
};

/// Per-step objective values recorded during gradient descent.
struct TrainTrace {
  std::vector<double> objective;
  int epochs = 0;
  double final_grad_norm = 0.0;
};

BinaryClassifier train(const Dataset& data, Algorithm algorithm,
                       const Hyperparams& hyperparams = {}, std::uint64_t seed = 0,
                       TrainTrace* trace = nullptr);

/// Objective value and gradient at (w, b); gradient holds d/dw then d/db.
struct ObjectiveEval {
  double value = 0.0;
  std::vector<double> gradient;
};

/// Mean log-loss + (l2/2)|w|^2.
ObjectiveEval logistic_objective(const Dataset& data, std::span<const double> w, double b,
                                 double l2);
/// Mean hinge loss + (l2/2)|w|^2, with the subgradient at kinks taken as 0.
ObjectiveEval hinge_objective(const Dataset& data, std::span<const double> w, double b,
                              double l2);

/// Fits Platt's sigmoid to (decision value, label) pairs with the smoothed
/// targets and Newton iterations of Lin, Lin and Weng.
SigmoidCalibration fit_sigmoid(std::span<const double> scores, std::span<const int> labels);

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
  bool operator==(const Confusion&) const = default;
};

struct Metrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  Confusion confusion;
  /// Set when the precision (recall) denominator was empty and 0 reported.
  bool precision_undefined = false;
  bool recall_undefined = false;
};

Metrics metrics_from_confusion(const Confusion& c);

/// Confusion at probability threshold 0.5 (positive iff p >= 0.5).
Metrics evaluate(const BinaryClassifier& model, const Dataset& test);

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Stratified k-fold: each class is shuffled with the seed and dealt over the
/// folds, so per-fold class counts are within one of the exact proportion.
std::vector<Fold> stratified_kfold(const Dataset& data, int k, std::uint64_t seed);

struct CrossValidation {
  Algorithm algorithm;
  std::vector<Metrics> folds;
  Metrics average;
};

/// Folds run concurrently; results do not depend on scheduling.
CrossValidation cross_validate(const Dataset& data, Algorithm algorithm, int k,
                               std::uint64_t seed, const Hyperparams& hyperparams = {});

/// Report in the layout
///   <title> (positive examples: P, negative examples: N)
///   <TAB>Precision<TAB>Recall<TAB>F1<TAB>Accuracy
///   Logistic Regression<TAB>0.7795<TAB>...
std::string render_report(std::string_view title, const Dataset& data,
                          std::span<const CrossValidation> results);

/// Two unit-variance Gaussian clouds centred at +separation*e1 (label 1) and
/// -separation*e1 (label 0), half the rows each, in the given order of ids
/// "s0", "s1", ...
Dataset synthetic_separable(std::size_t rows, std::size_t dimension, std::uint64_t seed,
                            double separation = 3.0);

/// Highest F1, then accuracy, then the order of kAllAlgorithms.
Algorithm select_best(const std::map<Algorithm, Metrics>& results);

}  // namespace attentive
