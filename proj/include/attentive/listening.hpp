#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "attentive/agenda.hpp"
#include "attentive/classify.hpp"
#include "attentive/encoder.hpp"
#include "attentive/random.hpp"

namespace attentive {

/// A probability source that can be plugged into a topic rule. Trained
/// classifiers are the usual implementation; anything else (a remote API, a
/// keyword rule) can stand in as long as it reports the encoder it expects.
class Predictor {
 public:
  virtual ~Predictor() = default;
  /// Probability in [0, 1] for one user message.
  virtual double probability(const Embedding& embedding, std::string_view text) const = 0;
  virtual const std::string& encoder_fingerprint() const = 0;
};

class ClassifierPredictor : public Predictor {
 public:
  explicit ClassifierPredictor(BinaryClassifier model) : model_(std::move(model)) {}
  double probability(const Embedding& embedding, std::string_view) const override {
    return model_.predict_proba(embedding);
  }
  const std::string& encoder_fingerprint() const override { return model_.encoder_fingerprint; }
  const BinaryClassifier& model() const { return model_; }

 private:
  BinaryClassifier model_;
};

struct IntentPredictor {
  std::string intent_id;
  std::shared_ptr<const Predictor> predictor;
  /// Model file the predictor was loaded from, if any.
  std::string source_path;
};

/// Deployable unit for one topic: relevance gate, intent models, thresholds.
struct IntentModelBundle {
  std::string id;
  std::string topic_id;
  std::shared_ptr<const Predictor> relevance;
  std::string relevance_path;
  std::vector<IntentPredictor> intents;
  double threshold1 = 0.5;
  double threshold2 = 0.6;
  std::string encoder_fingerprint;

  /// Loads a bundle file; model paths are relative to the bundle file.
  static IntentModelBundle load(const std::string& path);
  /// Writes the bundle file. Predictors must have been loaded from files.
  std::string to_json() const;
};

enum class Decision { kRespondWithIntent, kRelevantNoIntent, kIrrelevant };

std::string_view decision_name(Decision d);

struct Interpretation {
  double relevance_prob = 0.0;
  /// In bundle intent order.
  std::vector<std::pair<std::string, double>> intent_probs;
  std::optional<std::string> best_intent;
  Decision decision = Decision::kIrrelevant;

  bool operator==(const Interpretation&) const = default;
};

/// The topic rule: relevant when relevance > threshold1; then the intent with
/// the highest probability (first in bundle order on ties) is used when that
/// probability > threshold2.
Interpretation decide(double relevance_prob,
                      std::vector<std::pair<std::string, double>> intent_probs,
                      double threshold1, double threshold2);

/// Encodes the message and applies the bundle's rule.
Interpretation interpret(const IntentModelBundle& bundle, const EncoderModel& encoder,
                         std::string_view user_text);

/// Where a generated response came from. kDefault means no technique applied.
enum class ResponseSource {
  kParaphrasing,
  kVerbalizingEmotions,
  kSummarizing,
  kEncouraging,
  kDefault
};

std::string_view response_source_name(ResponseSource s);

struct GeneratedResponse {
  std::string text;
  ResponseSource source = ResponseSource::kDefault;
};

/// Uniform pick from `pool`, skipping `previous` when another option exists.
/// Returns the index into `pool`.
std::size_t pick_template(const std::vector<std::string>& pool, std::string_view previous,
                          Rng& rng);

/// Picks a response for an interpreted answer: intent templates (any
/// technique) for kRespondWithIntent, the topic's encouraging templates for
/// kRelevantNoIntent, default templates for kIrrelevant.
GeneratedResponse generate_response(const Topic& topic, const Interpretation& interp, Rng& rng,
                                    std::string_view previous_template = {});

/// Copy of the agenda with `bundle` attached to `topic_id`.
Agenda bind_bundle(const Agenda& agenda, std::string_view topic_id,
                   std::shared_ptr<const IntentModelBundle> bundle);

}  // namespace attentive
