#include "attentive/listening.hpp"

#include <filesystem>

#include <json.hpp>

#include "attentive/error.hpp"
#include "attentive/text.hpp"

namespace attentive {

using nlohmann::json;

namespace {

constexpr std::string_view kBundleFormat = "attentive-bundle/1";

ResponseSource source_for(Technique t) {
  switch (t) {
    case Technique::kParaphrasing: return ResponseSource::kParaphrasing;
    case Technique::kVerbalizingEmotions: return ResponseSource::kVerbalizingEmotions;
    case Technique::kSummarizing: return ResponseSource::kSummarizing;
    case Technique::kEncouraging: return ResponseSource::kEncouraging;
  }
  return ResponseSource::kDefault;
}

}  // namespace

std::string_view decision_name(Decision d) {
  switch (d) {
    case Decision::kRespondWithIntent: return "RESPOND_WITH_INTENT";
    case Decision::kRelevantNoIntent: return "RELEVANT_NO_INTENT";
    case Decision::kIrrelevant: return "IRRELEVANT";
  }
  return "?";
}

std::string_view response_source_name(ResponseSource s) {
  switch (s) {
    case ResponseSource::kParaphrasing: return "paraphrasing";
    case ResponseSource::kVerbalizingEmotions: return "verbalizing_emotions";
    case ResponseSource::kSummarizing: return "summarizing";
    case ResponseSource::kEncouraging: return "encouraging";
    case ResponseSource::kDefault: return "default";
  }
  return "?";
}

Interpretation decide(double relevance_prob,
                      std::vector<std::pair<std::string, double>> intent_probs,
                      double threshold1, double threshold2) {
  Interpretation out;
  out.relevance_prob = relevance_prob;
  out.intent_probs = std::move(intent_probs);
  if (!(relevance_prob > threshold1)) {
    out.decision = Decision::kIrrelevant;
    return out;
  }
  const std::pair<std::string, double>* best = nullptr;
  for (const auto& entry : out.intent_probs) {
    if (!best || entry.second > best->second) best = &entry;
  }
  if (best && best->second > threshold2) {
    out.decision = Decision::kRespondWithIntent;
    out.best_intent = best->first;
  } else {
    out.decision = Decision::kRelevantNoIntent;
  }
  return out;
}

Interpretation interpret(const IntentModelBundle& bundle, const EncoderModel& encoder,
                         std::string_view user_text) {
  if (bundle.encoder_fingerprint != encoder.fingerprint()) {
    throw Error(Errc::kFingerprintMismatch, "bundle '" + bundle.id + "' expects encoder " +
                                                bundle.encoder_fingerprint + ", got " +
                                                encoder.fingerprint());
  }
  const Embedding v = encoder.encode(user_text);
  const double relevance = bundle.relevance->probability(v, user_text);
  std::vector<std::pair<std::string, double>> probs;
  probs.reserve(bundle.intents.size());
  for (const auto& intent : bundle.intents) {
    probs.emplace_back(intent.intent_id, intent.predictor->probability(v, user_text));
  }
  return decide(relevance, std::move(probs), bundle.threshold1, bundle.threshold2);
}

std::size_t pick_template(const std::vector<std::string>& pool, std::string_view previous,
                          Rng& rng) {
  if (pool.empty()) throw Error(Errc::kNoTemplates, "template pool is empty");
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i] != previous) candidates.push_back(i);
  }
  if (candidates.empty()) return uniform_index(rng, pool.size());
  return candidates[uniform_index(rng, candidates.size())];
}

GeneratedResponse generate_response(const Topic& topic, const Interpretation& interp, Rng& rng,
                                    std::string_view previous_template) {
  switch (interp.decision) {
    case Decision::kRespondWithIntent: {
      std::vector<std::string> pool;
      std::vector<ResponseSource> sources;
      if (auto it = topic.templates.find(*interp.best_intent); it != topic.templates.end()) {
        for (const auto& [technique, list] : it->second) {
          for (const auto& t : list) {
            pool.push_back(t);
            sources.push_back(source_for(technique));
          }
        }
      }
      if (pool.empty()) {
        throw Error(Errc::kNoTemplates, "topic '" + topic.id + "' has no templates for intent '" +
                                            *interp.best_intent + "'");
      }
      const auto i = pick_template(pool, previous_template, rng);
      return {pool[i], sources[i]};
    }
    case Decision::kRelevantNoIntent:
      if (!topic.encourage_templates.empty()) {
        const auto i = pick_template(topic.encourage_templates, previous_template, rng);
        return {topic.encourage_templates[i], ResponseSource::kEncouraging};
      }
      [[fallthrough]];
    case Decision::kIrrelevant: {
      if (topic.default_templates.empty()) {
        throw Error(Errc::kNoTemplates, "topic '" + topic.id + "' has no default templates");
      }
      const auto i = pick_template(topic.default_templates, previous_template, rng);
      return {topic.default_templates[i], ResponseSource::kDefault};
    }
  }
  throw Error(Errc::kNoTemplates, "unreachable decision");
}

Agenda bind_bundle(const Agenda& agenda, std::string_view topic_id,
                   std::shared_ptr<const IntentModelBundle> bundle) {
  if (!bundle) throw Error(Errc::kInvalidArgument, "null bundle");
  if (!agenda.find_topic(topic_id)) {
    throw Error(Errc::kUnknownTopic, "agenda has no topic '" + std::string(topic_id) + "'");
  }
  if (bundle->topic_id != topic_id) {
    throw Error(Errc::kTopicMismatch, "bundle '" + bundle->id + "' is for topic '" +
                                          bundle->topic_id + "', not '" +
                                          std::string(topic_id) + "'");
  }
  Agenda copy = agenda;
  for (auto& topic : copy.topics) {
    if (topic.id == topic_id) {
      topic.bundle_ref = bundle->id;
      topic.bundle = bundle;
    }
  }
  return copy;
}

IntentModelBundle IntentModelBundle::load(const std::string& path) {
  json j;
  try {
    j = json::parse(text::read_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError("bundle " + path + ": " + e.what(), 0, 0);
  }
  if (j.value("format", "") != kBundleFormat) {
    throw Error(Errc::kVersionMismatch,
                "bundle " + path + " is not format " + std::string(kBundleFormat));
  }
  const auto base = std::filesystem::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path candidate(p);
    return (candidate.is_absolute() ? candidate : base / candidate).string();
  };
  IntentModelBundle b;
  try {
    b.id = j.at("id").get<std::string>();
    b.topic_id = j.at("topic_id").get<std::string>();
    b.threshold1 = j.at("threshold1").get<double>();
    b.threshold2 = j.at("threshold2").get<double>();
    b.encoder_fingerprint = j.at("encoder_fingerprint").get<std::string>();
    b.relevance_path = j.at("relevance").get<std::string>();
    b.relevance = std::make_shared<ClassifierPredictor>(
        BinaryClassifier::load(resolve(b.relevance_path), b.encoder_fingerprint));
    for (const auto& entry : j.at("intents")) {
      IntentPredictor ip;
      ip.intent_id = entry.at("id").get<std::string>();
      ip.source_path = entry.at("model").get<std::string>();
      ip.predictor = std::make_shared<ClassifierPredictor>(
          BinaryClassifier::load(resolve(ip.source_path), b.encoder_fingerprint));
      b.intents.push_back(std::move(ip));
    }
  } catch (const json::exception& e) {
    throw ParseError("bundle " + path + ": " + e.what(), 0, 0);
  }
  for (double t : {b.threshold1, b.threshold2}) {
    if (!(t >= 0.0 && t <= 1.0)) {
      throw Error(Errc::kValidationError, "bundle " + b.id + ": thresholds must be in [0,1]");
    }
  }
  return b;
}

std::string IntentModelBundle::to_json() const {
  json j;
  j["format"] = kBundleFormat;
  j["id"] = id;
  j["topic_id"] = topic_id;
  j["threshold1"] = threshold1;
  j["threshold2"] = threshold2;
  j["encoder_fingerprint"] = encoder_fingerprint;
  j["relevance"] = relevance_path;
  json list = json::array();
  for (const auto& ip : intents) list.push_back({{"id", ip.intent_id}, {"model", ip.source_path}});
  j["intents"] = std::move(list);
  return j.dump(1);
}

}  // namespace attentive
