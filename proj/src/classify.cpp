#include "attentive/classify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <numeric>

#include <json.hpp>

#include "attentive/error.hpp"
#include "attentive/random.hpp"
#include "attentive/text.hpp"

namespace attentive {

using nlohmann::json;

namespace {

constexpr std::string_view kFormat = "attentive-classifier/1";

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) {
  if (z > 0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

double signed_label(int label) { return label == 1 ? 1.0 : -1.0; }

double linear_score(std::span<const double> w, double b, std::span<const double> x) {
  double z = b;
  for (std::size_t j = 0; j < w.size(); ++j) z += w[j] * x[j];
  return z;
}

void check_trainable(const Dataset& data) {
  if (data.count(1) == 0 || data.count(0) == 0) {
    throw Error(Errc::kSingleClassDataset, "training data needs both positive and negative rows (" +
                                               std::to_string(data.count(1)) + " positive, " +
                                               std::to_string(data.count(0)) + " negative)");
  }
  const std::size_t dim = data.dimension();
  for (const auto& row : data.rows) {
    if (row.x.size() != dim) {
      throw Error(Errc::kDimensionMismatch, "dataset rows have mixed dimensions");
    }
  }
}

enum class Loss { kLogistic, kHinge };

ObjectiveEval linear_objective(const Dataset& data, std::span<const double> w, double b,
                               double l2, Loss loss, bool with_gradient) {
  const std::size_t dim = w.size();
  ObjectiveEval out;
  if (with_gradient) out.gradient.assign(dim + 1, 0.0);
  const double n = static_cast<double>(data.rows.size());
  double total = 0.0;
  for (const auto& row : data.rows) {
    const double y = signed_label(row.label);
    const double z = linear_score(w, b, row.x);
    double coeff = 0.0;  // d loss / d z
    if (loss == Loss::kLogistic) {
      total += softplus(-y * z);
      coeff = -y * sigmoid(-y * z);
    } else {
      const double slack = 1.0 - y * z;
      if (slack > 0) {
        total += slack;
        coeff = -y;
      }
    }
    if (with_gradient && coeff != 0.0) {
      for (std::size_t j = 0; j < dim; ++j) out.gradient[j] += coeff * row.x[j];
      out.gradient[dim] += coeff;
    }
  }
  double penalty = 0.0;
  for (double wj : w) penalty += wj * wj;
  out.value = total / n + 0.5 * l2 * penalty;
  if (with_gradient) {
    for (std::size_t j = 0; j < dim; ++j) out.gradient[j] = out.gradient[j] / n + l2 * w[j];
    out.gradient[dim] /= n;
  }
  return out;
}

// Full-batch gradient descent with Armijo backtracking. Only steps that
// decrease the objective are accepted.
void descend(const Dataset& data, Loss loss, const Hyperparams& hp, std::vector<double>& w,
             double& b, TrainTrace* trace) {
  constexpr double kArmijo = 1e-4;
  constexpr double kMinStep = 1e-16;
  const std::size_t dim = data.dimension();
  w.assign(dim, 0.0);
  b = 0.0;
  double step = 1.0;
  std::vector<double> trial_w(dim);
  int epoch = 0;
  double grad_norm = 0.0;
  auto current = linear_objective(data, w, b, hp.l2, loss, true);
  if (trace) trace->objective.push_back(current.value);
  for (; epoch < hp.max_epochs; ++epoch) {
    if (!std::isfinite(current.value)) {
      throw Error(Errc::kNonfiniteLoss, "training objective diverged");
    }
    double sq = 0.0;
    for (double g : current.gradient) sq += g * g;
    grad_norm = std::sqrt(sq);
    if (grad_norm < hp.grad_tol) break;

    double t = std::min(step * 2.0, 1e6);
    bool accepted = false;
    double trial_b = b;
    while (t >= kMinStep) {
      for (std::size_t j = 0; j < dim; ++j) trial_w[j] = w[j] - t * current.gradient[j];
      trial_b = b - t * current.gradient[dim];
      const double value = linear_objective(data, trial_w, trial_b, hp.l2, loss, false).value;
      if (!std::isfinite(value)) {
        t *= 0.5;
        continue;
      }
      if (value <= current.value - kArmijo * t * sq) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;
    step = t;
    w = trial_w;
    b = trial_b;
    current = linear_objective(data, w, b, hp.l2, loss, true);
    if (trace) trace->objective.push_back(current.value);
  }
  if (!std::isfinite(current.value)) {
    throw Error(Errc::kNonfiniteLoss, "training objective diverged");
  }
  if (trace) {
    trace->epochs = epoch;
    trace->final_grad_norm = grad_norm;
  }
}

// Per-class seeded shuffle; the first floor(share * n_c) rows of each class
// are held out, provided the class keeps at least one training row.
void split_holdout(const Dataset& data, double share, std::uint64_t seed,
                   std::vector<std::size_t>& fit, std::vector<std::size_t>& held) {
  Rng rng(seed);
  for (int label : {1, 0}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < data.rows.size(); ++i) {
      if (data.rows[i].label == label) idx.push_back(i);
    }
    shuffle(std::span<std::size_t>(idx), rng);
    auto take = static_cast<std::size_t>(std::floor(share * static_cast<double>(idx.size())));
    if (take >= idx.size()) take = idx.empty() ? 0 : idx.size() - 1;
    held.insert(held.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
    fit.insert(fit.end(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end());
  }
  std::sort(fit.begin(), fit.end());
  std::sort(held.begin(), held.end());
}

void train_adaboost(const Dataset& data, const Hyperparams& hp, BinaryClassifier& model) {
  constexpr double kEps = 1e-10;
  const std::size_t n = data.rows.size();
  const std::size_t dim = data.dimension();
  std::vector<std::vector<std::size_t>> order(dim, std::vector<std::size_t>(n));
  for (std::size_t j = 0; j < dim; ++j) {
    std::iota(order[j].begin(), order[j].end(), 0);
    std::stable_sort(order[j].begin(), order[j].end(), [&](std::size_t a, std::size_t c) {
      return data.rows[a].x[j] < data.rows[c].x[j];
    });
  }
  std::vector<double> weight(n, 1.0 / static_cast<double>(n));

  for (int round = 0; round < hp.boosting_rounds; ++round) {
    double pos_total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (data.rows[i].label == 1) pos_total += weight[i];
    }
    DecisionStump best;
    double best_err = 2.0;
    for (std::size_t j = 0; j < dim; ++j) {
      const auto& ord = order[j];
      // Threshold below every value: all rows predicted positive.
      double pos_below = 0.0;
      double neg_below = 0.0;
      double neg_total = 1.0 - pos_total;
      for (std::size_t p = 0; p < n; ++p) {
        const double value = data.rows[ord[p]].x[j];
        if (p == 0 || data.rows[ord[p - 1]].x[j] < value) {
          const double threshold =
              p == 0 ? value - 1.0 : 0.5 * (data.rows[ord[p - 1]].x[j] + value);
          // polarity +1 predicts positive above the threshold
          const double err_up = pos_below + (neg_total - neg_below);
          const double err_down = 1.0 - err_up;
          if (err_up < best_err) {
            best_err = err_up;
            best = {j, threshold, 1, 0.0};
          }
          if (err_down < best_err) {
            best_err = err_down;
            best = {j, threshold, -1, 0.0};
          }
        }
        if (data.rows[ord[p]].label == 1) {
          pos_below += weight[ord[p]];
        } else {
          neg_below += weight[ord[p]];
        }
      }
    }
    if (best_err >= 0.5 - kEps) break;
    const double err = std::clamp(best_err, kEps, 1.0 - kEps);
    best.weight = 0.5 * std::log((1.0 - err) / err);
    model.stumps.push_back(best);

    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double h = (data.rows[i].x[best.feature] > best.threshold ? 1.0 : -1.0) *
                       static_cast<double>(best.polarity);
      weight[i] *= std::exp(-best.weight * signed_label(data.rows[i].label) * h);
      sum += weight[i];
    }
    for (auto& wi : weight) wi /= sum;
    if (best_err <= kEps) break;
  }
}

GaussianClass fit_gaussian(const Dataset& data, int label, double floor_var) {
  const std::size_t dim = data.dimension();
  GaussianClass g;
  g.mean.assign(dim, 0.0);
  g.variance.assign(dim, 0.0);
  const double count = static_cast<double>(data.count(label));
  for (const auto& row : data.rows) {
    if (row.label != label) continue;
    for (std::size_t j = 0; j < dim; ++j) g.mean[j] += row.x[j];
  }
  for (auto& m : g.mean) m /= count;
  for (const auto& row : data.rows) {
    if (row.label != label) continue;
    for (std::size_t j = 0; j < dim; ++j) {
      const double d = row.x[j] - g.mean[j];
      g.variance[j] += d * d;
    }
  }
  for (auto& v : g.variance) v = std::max(v / count, floor_var);
  g.log_prior = std::log(count / static_cast<double>(data.rows.size()));
  return g;
}

double gaussian_log_likelihood(const GaussianClass& g, std::span<const double> x) {
  constexpr double kLog2Pi = 1.8378770664093453;
  double ll = g.log_prior;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double d = x[j] - g.mean[j];
    ll -= 0.5 * (kLog2Pi + std::log(g.variance[j]) + d * d / g.variance[j]);
  }
  return ll;
}

}  // namespace

std::size_t Dataset::count(int label) const {
  return static_cast<std::size_t>(std::count_if(
      rows.begin(), rows.end(), [label](const DatasetRow& r) { return r.label == label; }));
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.encoder_fingerprint = encoder_fingerprint;
  out.rows.reserve(indices.size());
  for (auto i : indices) out.rows.push_back(rows.at(i));
  return out;
}

std::string_view algorithm_tag(Algorithm a) {
  switch (a) {
    case Algorithm::kLogisticRegression: return "logreg";
    case Algorithm::kLinearSvm: return "svm";
    case Algorithm::kAdaBoost: return "adaboost";
    case Algorithm::kNaiveBayes: return "nb";
  }
  return "?";
}

std::string_view algorithm_display_name(Algorithm a) {
  switch (a) {
    case Algorithm::kLogisticRegression: return "Logistic Regression";
    case Algorithm::kLinearSvm: return "Linear SVM";
    case Algorithm::kAdaBoost: return "AdaBoost";
    case Algorithm::kNaiveBayes: return "Naive Bayes";
  }
  return "?";
}

std::optional<Algorithm> parse_algorithm(std::string_view tag) {
  for (auto a : kAllAlgorithms) {
    if (algorithm_tag(a) == tag) return a;
  }
  return std::nullopt;
}

ObjectiveEval logistic_objective(const Dataset& data, std::span<const double> w, double b,
                                 double l2) {
  return linear_objective(data, w, b, l2, Loss::kLogistic, true);
}

ObjectiveEval hinge_objective(const Dataset& data, std::span<const double> w, double b,
                              double l2) {
  return linear_objective(data, w, b, l2, Loss::kHinge, true);
}

SigmoidCalibration fit_sigmoid(std::span<const double> scores, std::span<const int> labels) {
  double prior1 = 0.0;
  double prior0 = 0.0;
  for (int y : labels) (y == 1 ? prior1 : prior0) += 1.0;
  const double hi = (prior1 + 1.0) / (prior1 + 2.0);
  const double lo = 1.0 / (prior0 + 2.0);
  std::vector<double> target(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) target[i] = labels[i] == 1 ? hi : lo;

  // Negative log-likelihood of the targets; P(y=1|f) = 1/(1+exp(f*A+B)).
  auto nll = [&](double a, double b) {
    double f = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const double z = scores[i] * a + b;
      f += z >= 0 ? target[i] * z + std::log1p(std::exp(-z))
                  : (target[i] - 1.0) * z + std::log1p(std::exp(z));
    }
    return f;
  };

  double a = 0.0;
  double b = std::log((prior0 + 1.0) / (prior1 + 1.0));
  double fval = nll(a, b);
  for (int iter = 0; iter < 100; ++iter) {
    double h11 = 1e-12, h22 = 1e-12, h21 = 0.0, g1 = 0.0, g2 = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const double z = scores[i] * a + b;
      double p, q;
      if (z >= 0) {
        p = std::exp(-z) / (1.0 + std::exp(-z));
        q = 1.0 / (1.0 + std::exp(-z));
      } else {
        p = 1.0 / (1.0 + std::exp(z));
        q = std::exp(z) / (1.0 + std::exp(z));
      }
      const double d2 = p * q;
      h11 += scores[i] * scores[i] * d2;
      h22 += d2;
      h21 += scores[i] * d2;
      const double d1 = target[i] - p;
      g1 += scores[i] * d1;
      g2 += d1;
    }
    if (std::abs(g1) < 1e-5 && std::abs(g2) < 1e-5) break;
    const double det = h11 * h22 - h21 * h21;
    const double da = -(h22 * g1 - h21 * g2) / det;
    const double db = -(-h21 * g1 + h11 * g2) / det;
    const double gd = g1 * da + g2 * db;
    double stepsize = 1.0;
    while (stepsize >= 1e-10) {
      const double na = a + stepsize * da;
      const double nb = b + stepsize * db;
      const double nf = nll(na, nb);
      if (nf < fval + 1e-4 * stepsize * gd) {
        a = na;
        b = nb;
        fval = nf;
        break;
      }
      stepsize /= 2.0;
    }
    if (stepsize < 1e-10) break;
  }
  return {a, b};
}

double BinaryClassifier::decision_value(std::span<const double> x) const {
  if (x.size() != dimension) {
    throw Error(Errc::kDimensionMismatch, "input has " + std::to_string(x.size()) +
                                              " dimensions, model expects " +
                                              std::to_string(dimension));
  }
  switch (algorithm) {
    case Algorithm::kLogisticRegression:
    case Algorithm::kLinearSvm:
      return linear_score(weights, bias, x);
    case Algorithm::kAdaBoost: {
      double f = 0.0;
      for (const auto& s : stumps) {
        const double h = (x[s.feature] > s.threshold ? 1.0 : -1.0) * s.polarity;
        f += s.weight * h;
      }
      return f;
    }
    case Algorithm::kNaiveBayes:
      return gaussian_log_likelihood(positive, x) - gaussian_log_likelihood(negative, x);
  }
  return 0.0;
}

double BinaryClassifier::predict_proba_raw(std::span<const double> x) const {
  const double score = decision_value(x);
  switch (algorithm) {
    case Algorithm::kLinearSvm:
      if (calibration) return sigmoid(-(calibration->a * score + calibration->b));
      return sigmoid(score);
    case Algorithm::kAdaBoost:
      // The boosted margin estimates half the log-odds.
      return sigmoid(2.0 * score);
    case Algorithm::kLogisticRegression:
    case Algorithm::kNaiveBayes:
      return sigmoid(score);
  }
  return 0.5;
}

double BinaryClassifier::predict_proba(const Embedding& v) const {
  if (v.fingerprint != encoder_fingerprint) {
    throw Error(Errc::kFingerprintMismatch, "embedding from encoder " + v.fingerprint +
                                                " given to a model trained under " +
                                                encoder_fingerprint);
  }
  return predict_proba_raw(v.values);
}

BinaryClassifier train(const Dataset& data, Algorithm algorithm, const Hyperparams& hp,
                       std::uint64_t seed, TrainTrace* trace) {
  check_trainable(data);
  if (hp.l2 < 0 || hp.max_epochs < 1 || hp.grad_tol <= 0 || hp.calibration_holdout < 0 ||
      hp.calibration_holdout >= 1 || hp.boosting_rounds < 1 || hp.variance_floor <= 0) {
    throw Error(Errc::kInvalidArgument, "hyperparameters out of range");
  }
  BinaryClassifier model;
  model.algorithm = algorithm;
  model.dimension = data.dimension();
  model.encoder_fingerprint = data.encoder_fingerprint;
  model.trained_on = data.rows.size();
  model.hyperparams = hp;
  model.seed = seed;

  switch (algorithm) {
    case Algorithm::kLogisticRegression:
      descend(data, Loss::kLogistic, hp, model.weights, model.bias, trace);
      break;
    case Algorithm::kLinearSvm: {
      std::vector<std::size_t> fit_idx, held_idx;
      split_holdout(data, hp.calibration_holdout, seed, fit_idx, held_idx);
      const Dataset fit_set = data.subset(fit_idx);
      check_trainable(fit_set);
      descend(fit_set, Loss::kHinge, hp, model.weights, model.bias, trace);
      Dataset calib_set = data.subset(held_idx);
      if (calib_set.count(0) == 0 || calib_set.count(1) == 0) calib_set = fit_set;
      std::vector<double> scores;
      std::vector<int> labels;
      for (const auto& row : calib_set.rows) {
        scores.push_back(linear_score(model.weights, model.bias, row.x));
        labels.push_back(row.label);
      }
      model.calibration = fit_sigmoid(scores, labels);
      break;
    }
    case Algorithm::kAdaBoost:
      train_adaboost(data, hp, model);
      break;
    case Algorithm::kNaiveBayes:
      model.negative = fit_gaussian(data, 0, hp.variance_floor);
      model.positive = fit_gaussian(data, 1, hp.variance_floor);
      break;
  }
  return model;
}

std::string BinaryClassifier::to_json() const {
  json j;
  j["format"] = kFormat;
  j["algorithm"] = algorithm_tag(algorithm);
  j["dimension"] = dimension;
  j["encoder_fingerprint"] = encoder_fingerprint;
  j["trained_on"] = trained_on;
  j["seed"] = seed;
  j["hyperparams"] = {{"l2", hyperparams.l2},
                      {"max_epochs", hyperparams.max_epochs},
                      {"grad_tol", hyperparams.grad_tol},
                      {"calibration_holdout", hyperparams.calibration_holdout},
                      {"boosting_rounds", hyperparams.boosting_rounds},
                      {"variance_floor", hyperparams.variance_floor}};
  switch (algorithm) {
    case Algorithm::kLogisticRegression:
    case Algorithm::kLinearSvm:
      j["weights"] = weights;
      j["bias"] = bias;
      if (calibration) j["calibration"] = {{"a", calibration->a}, {"b", calibration->b}};
      break;
    case Algorithm::kAdaBoost: {
      json stumps_json = json::array();
      for (const auto& s : stumps) {
        stumps_json.push_back({{"feature", s.feature},
                               {"threshold", s.threshold},
                               {"polarity", s.polarity},
                               {"weight", s.weight}});
      }
      j["stumps"] = std::move(stumps_json);
      break;
    }
    case Algorithm::kNaiveBayes:
      for (const auto& [name, g] : {std::pair{"negative", &negative}, {"positive", &positive}}) {
        j[name] = {{"mean", g->mean}, {"variance", g->variance}, {"log_prior", g->log_prior}};
      }
      break;
  }
  return j.dump(1);
}

BinaryClassifier BinaryClassifier::from_json(std::string_view text,
                                             std::string_view expected_fingerprint) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("classifier model: ") + e.what(), 0, 0);
  }
  if (j.value("format", "") != kFormat) {
    throw Error(Errc::kVersionMismatch,
                "classifier model format is not " + std::string(kFormat));
  }
  BinaryClassifier m;
  try {
    const auto algo = parse_algorithm(j.at("algorithm").get<std::string>());
    if (!algo) throw ParseError("classifier model: unknown algorithm", 0, 0);
    m.algorithm = *algo;
    m.dimension = j.at("dimension").get<std::size_t>();
    m.encoder_fingerprint = j.at("encoder_fingerprint").get<std::string>();
    m.trained_on = j.at("trained_on").get<std::size_t>();
    m.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("hyperparams")) {
      const auto& h = j["hyperparams"];
      m.hyperparams.l2 = h.at("l2").get<double>();
      m.hyperparams.max_epochs = h.at("max_epochs").get<int>();
      m.hyperparams.grad_tol = h.at("grad_tol").get<double>();
      m.hyperparams.calibration_holdout = h.at("calibration_holdout").get<double>();
      m.hyperparams.boosting_rounds = h.at("boosting_rounds").get<int>();
      m.hyperparams.variance_floor = h.at("variance_floor").get<double>();
    }
    switch (m.algorithm) {
      case Algorithm::kLogisticRegression:
      case Algorithm::kLinearSvm:
        m.weights = j.at("weights").get<std::vector<double>>();
        m.bias = j.at("bias").get<double>();
        if (j.contains("calibration")) {
          m.calibration = SigmoidCalibration{j["calibration"].at("a").get<double>(),
                                             j["calibration"].at("b").get<double>()};
        }
        if (m.weights.size() != m.dimension) {
          throw ParseError("classifier model: weight count differs from dimension", 0, 0);
        }
        break;
      case Algorithm::kAdaBoost:
        for (const auto& s : j.at("stumps")) {
          DecisionStump stump{s.at("feature").get<std::size_t>(),
                              s.at("threshold").get<double>(), s.at("polarity").get<int>(),
                              s.at("weight").get<double>()};
          if (stump.feature >= m.dimension) {
            throw ParseError("classifier model: stump feature out of range", 0, 0);
          }
          m.stumps.push_back(stump);
        }
        break;
      case Algorithm::kNaiveBayes:
        for (auto [name, g] : {std::pair{"negative", &m.negative}, {"positive", &m.positive}}) {
          const auto& c = j.at(name);
          g->mean = c.at("mean").get<std::vector<double>>();
          g->variance = c.at("variance").get<std::vector<double>>();
          g->log_prior = c.at("log_prior").get<double>();
          if (g->mean.size() != m.dimension || g->variance.size() != m.dimension) {
            throw ParseError("classifier model: class statistics differ from dimension", 0, 0);
          }
        }
        break;
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("classifier model: ") + e.what(), 0, 0);
  }
  if (!expected_fingerprint.empty() && m.encoder_fingerprint != expected_fingerprint) {
    throw Error(Errc::kFingerprintMismatch,
                "classifier was trained under encoder " + m.encoder_fingerprint +
                    ", expected " + std::string(expected_fingerprint));
  }
  return m;
}

BinaryClassifier BinaryClassifier::load(const std::string& path,
                                        std::string_view expected_fingerprint) {
  return from_json(text::read_file(path), expected_fingerprint);
}

Metrics metrics_from_confusion(const Confusion& c) {
  Metrics m;
  m.confusion = c;
  const double tp = static_cast<double>(c.tp);
  if (c.tp + c.fp == 0) {
    m.precision_undefined = true;
  } else {
    m.precision = tp / static_cast<double>(c.tp + c.fp);
  }
  if (c.tp + c.fn == 0) {
    m.recall_undefined = true;
  } else {
    m.recall = tp / static_cast<double>(c.tp + c.fn);
  }
  if (m.precision + m.recall > 0) {
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  }
  if (c.total() > 0) m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  return m;
}

Metrics evaluate(const BinaryClassifier& model, const Dataset& test) {
  if (test.rows.empty()) throw Error(Errc::kEmptyInput, "evaluation set is empty");
  Confusion c;
  for (const auto& row : test.rows) {
    const bool predicted = model.predict_proba_raw(row.x) >= 0.5;
    if (predicted && row.label == 1) ++c.tp;
    else if (predicted) ++c.fp;
    else if (row.label == 1) ++c.fn;
    else ++c.tn;
  }
  return metrics_from_confusion(c);
}

std::vector<Fold> stratified_kfold(const Dataset& data, int k, std::uint64_t seed) {
  if (k < 2) throw Error(Errc::kInvalidArgument, "k-fold needs k >= 2");
  const auto folds = static_cast<std::size_t>(k);
  for (int label : {1, 0}) {
    if (data.count(label) < folds) {
      throw Error(Errc::kTooFewPerClass,
                  std::string(label ? "positive" : "negative") + " class has " +
                      std::to_string(data.count(label)) + " rows, fewer than k=" +
                      std::to_string(k));
    }
  }
  Rng rng(seed);
  std::vector<Fold> out(folds);
  std::size_t next = 0;
  for (int label : {1, 0}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < data.rows.size(); ++i) {
      if (data.rows[i].label == label) idx.push_back(i);
    }
    shuffle(std::span<std::size_t>(idx), rng);
    for (auto i : idx) {
      out[next].test.push_back(i);
      next = (next + 1) % folds;
    }
  }
  for (auto& fold : out) {
    std::sort(fold.test.begin(), fold.test.end());
    std::vector<bool> in_test(data.rows.size(), false);
    for (auto i : fold.test) in_test[i] = true;
    for (std::size_t i = 0; i < data.rows.size(); ++i) {
      if (!in_test[i]) fold.train.push_back(i);
    }
  }
  return out;
}

CrossValidation cross_validate(const Dataset& data, Algorithm algorithm, int k,
                               std::uint64_t seed, const Hyperparams& hp) {
  const auto folds = stratified_kfold(data, k, seed);
  std::vector<std::future<Metrics>> pending;
  pending.reserve(folds.size());
  for (std::size_t f = 0; f < folds.size(); ++f) {
    pending.push_back(std::async(std::launch::async, [&, f] {
      const auto train_set = data.subset(folds[f].train);
      const auto test_set = data.subset(folds[f].test);
      const auto model = train(train_set, algorithm, hp, seed + f);
      return evaluate(model, test_set);
    }));
  }
  CrossValidation cv{algorithm, {}, {}};
  for (auto& p : pending) cv.folds.push_back(p.get());
  const double n = static_cast<double>(cv.folds.size());
  for (const auto& m : cv.folds) {
    cv.average.precision += m.precision;
    cv.average.recall += m.recall;
    cv.average.f1 += m.f1;
    cv.average.accuracy += m.accuracy;
    cv.average.confusion.tp += m.confusion.tp;
    cv.average.confusion.fp += m.confusion.fp;
    cv.average.confusion.fn += m.confusion.fn;
    cv.average.confusion.tn += m.confusion.tn;
    cv.average.precision_undefined |= m.precision_undefined;
    cv.average.recall_undefined |= m.recall_undefined;
  }
  cv.average.precision /= n;
  cv.average.recall /= n;
  cv.average.f1 /= n;
  cv.average.accuracy /= n;
  return cv;
}

std::string render_report(std::string_view title, const Dataset& data,
                          std::span<const CrossValidation> results) {
  std::string out = std::string(title) + " (positive examples: " + std::to_string(data.count(1)) +
                    ", negative examples: " + std::to_string(data.count(0)) + ")\n";
  out += "\tPrecision\tRecall\tF1\tAccuracy\n";
  char buf[128];
  for (const auto& r : results) {
    std::snprintf(buf, sizeof buf, "\t%.4f\t%.4f\t%.4f\t%.4f", r.average.precision,
                  r.average.recall, r.average.f1, r.average.accuracy);
    out += std::string(algorithm_display_name(r.algorithm)) + buf;
    if (r.average.precision_undefined || r.average.recall_undefined) out += "\t(undefined folds)";
    out += "\n";
  }
  return out;
}

Algorithm select_best(const std::map<Algorithm, Metrics>& results) {
  if (results.empty()) throw Error(Errc::kEmptyInput, "no cross-validation results to compare");
  std::optional<Algorithm> best;
  for (auto a : kAllAlgorithms) {
    auto it = results.find(a);
    if (it == results.end()) continue;
    if (!best) {
      best = a;
      continue;
    }
    const auto& cur = results.at(*best);
    if (it->second.f1 > cur.f1 || (it->second.f1 == cur.f1 && it->second.accuracy > cur.accuracy)) {
      best = a;
    }
  }
  return *best;
}

Dataset synthetic_separable(std::size_t rows, std::size_t dimension, std::uint64_t seed,
                            double separation) {
  if (dimension == 0) throw Error(Errc::kInvalidArgument, "dimension must be positive");
  Rng rng(seed);
  Dataset d;
  d.encoder_fingerprint = "synthetic";
  d.rows.reserve(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    DatasetRow r;
    r.label = i % 2 == 0 ? 1 : 0;
    r.x.resize(dimension);
    for (auto& v : r.x) v = standard_normal(rng);
    r.x[0] += r.label == 1 ? separation : -separation;
    r.id = "s" + std::to_string(i);
    d.rows.push_back(std::move(r));
  }
  return d;
}

}  // namespace attentive
