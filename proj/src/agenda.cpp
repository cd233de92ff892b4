#include "attentive/agenda.hpp"

#include <set>

#include <json.hpp>

#include "attentive/error.hpp"
#include "attentive/listening.hpp"
#include "attentive/text.hpp"

namespace attentive {

using nlohmann::json;

namespace {

constexpr std::string_view kFormat = "attentive-agenda/1";

std::pair<std::size_t, std::size_t> line_and_column(std::string_view text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t column = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return {line, column};
}

// Reads an optional field, reporting schema errors with the field path.
template <typename T>
void read_opt(const json& obj, const char* key, T& out, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ParseError(where + "." + key + " has the wrong type", 0, 0);
  }
}

template <typename T>
T read_req(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(where + " is missing '" + key + "'", 0, 0);
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ParseError(where + "." + key + " has the wrong type", 0, 0);
  }
}

void read_phrases(const json& j, Phrases& p) {
  const std::string where = "phrases";
  read_opt(j, "greeting", p.greeting, where);
  read_opt(j, "closing", p.closing, where);
  read_opt(j, "steer_back", p.steer_back, where);
  read_opt(j, "repeat_prefix", p.repeat_prefix, where);
  read_opt(j, "clarify", p.clarify, where);
  read_opt(j, "dodge", p.dodge, where);
  read_opt(j, "gibberish", p.gibberish, where);
  read_opt(j, "move_on", p.move_on, where);
  read_opt(j, "rating_reprompt", p.rating_reprompt, where);
}

Topic read_topic(const json& j, std::size_t index, const AgendaSettings& settings) {
  const std::string where = "topics[" + std::to_string(index) + "]";
  if (!j.is_object()) throw ParseError(where + " must be an object", 0, 0);
  Topic t;
  t.id = read_req<std::string>(j, "id", where);
  t.order = static_cast<int>(index);
  read_opt(j, "order", t.order, where);
  t.question_text = read_req<std::string>(j, "question", where);
  read_opt(j, "intro", t.intro, where);
  std::string kind = "open_ended";
  read_opt(j, "kind", kind, where);
  if (kind == "open_ended") {
    t.kind = TopicKind::kOpenEnded;
  } else if (kind == "rating_1_to_5") {
    t.kind = TopicKind::kRating;
  } else {
    throw ParseError(where + ".kind must be open_ended or rating_1_to_5", 0, 0);
  }
  std::string bundle;
  read_opt(j, "bundle", bundle, where);
  if (!bundle.empty()) t.bundle_ref = bundle;
  if (auto it = j.find("templates"); it != j.end()) {
    if (!it->is_object()) throw ParseError(where + ".templates must be an object", 0, 0);
    for (const auto& [intent, by_technique] : it->items()) {
      if (!by_technique.is_object()) {
        throw ParseError(where + ".templates." + intent + " must be an object", 0, 0);
      }
      auto& slot = t.templates[intent];
      for (const auto& [name, list] : by_technique.items()) {
        auto technique = parse_technique(name);
        if (!technique) {
          throw ParseError(where + ".templates." + intent + ": unknown technique '" + name + "'",
                           0, 0);
        }
        try {
          slot[*technique] = list.get<std::vector<std::string>>();
        } catch (const json::exception&) {
          throw ParseError(where + ".templates." + intent + "." + name + " must be a string list",
                           0, 0);
        }
      }
    }
  }
  read_opt(j, "default_templates", t.default_templates, where);
  read_opt(j, "encourage_templates", t.encourage_templates, where);
  read_opt(j, "deflections", t.deflections, where);
  t.max_digressions = settings.max_digressions_per_topic;
  read_opt(j, "max_digressions", t.max_digressions, where);
  read_opt(j, "ask_rating", t.ask_rating, where);
  return t;
}

}  // namespace

std::string_view technique_name(Technique t) {
  switch (t) {
    case Technique::kParaphrasing: return "paraphrasing";
    case Technique::kVerbalizingEmotions: return "verbalizing_emotions";
    case Technique::kSummarizing: return "summarizing";
    case Technique::kEncouraging: return "encouraging";
  }
  return "?";
}

std::optional<Technique> parse_technique(std::string_view name) {
  for (auto t : {Technique::kParaphrasing, Technique::kVerbalizingEmotions,
                 Technique::kSummarizing, Technique::kEncouraging}) {
    if (technique_name(t) == name) return t;
  }
  return std::nullopt;
}

const Topic* Agenda::find_topic(std::string_view topic_id) const {
  for (const auto& t : topics) {
    if (t.id == topic_id) return &t;
  }
  return nullptr;
}

Agenda parse_agenda(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    auto [line, column] = line_and_column(text, e.byte);
    throw ParseError(e.what(), line, column);
  }
  if (!j.is_object()) throw ParseError("agenda must be a JSON object", 1, 1);
  const auto format = read_req<std::string>(j, "format", "agenda");
  if (format != kFormat) {
    throw ParseError("unsupported agenda format '" + format + "' (expected " +
                         std::string(kFormat) + ")",
                     0, 0);
  }
  Agenda a;
  a.id = read_req<std::string>(j, "id", "agenda");
  read_opt(j, "title", a.title, "agenda");
  if (auto it = j.find("settings"); it != j.end()) {
    read_opt(*it, "threshold1", a.settings.threshold1, "settings");
    read_opt(*it, "threshold2", a.settings.threshold2, "settings");
    read_opt(*it, "max_digressions_per_topic", a.settings.max_digressions_per_topic, "settings");
    read_opt(*it, "rng_seed", a.settings.rng_seed, "settings");
  }
  if (auto it = j.find("phrases"); it != j.end()) read_phrases(*it, a.phrases);
  read_opt(j, "global_fallbacks", a.global_fallbacks, "agenda");
  if (a.global_fallbacks.empty() && !j.contains("global_fallbacks")) {
    a.global_fallbacks = {"Sorry, I'm just a chatbot and can't really answer that."};
  }

  auto topics_it = j.find("topics");
  if (topics_it == j.end() || !topics_it->is_array()) {
    throw ParseError("agenda is missing the 'topics' list", 0, 0);
  }
  std::set<std::string> seen;
  for (std::size_t i = 0; i < topics_it->size(); ++i) {
    Topic t = read_topic((*topics_it)[i], i, a.settings);
    if (!seen.insert(t.id).second) {
      throw Error(Errc::kValidationError, "duplicate topic id '" + t.id + "'");
    }
    a.topics.push_back(std::move(t));
  }
  if (a.topics.empty()) {
    throw Error(Errc::kValidationError, "agenda must contain at least one topic");
  }
  return a;
}

Agenda load_agenda(const std::string& path) { return parse_agenda(text::read_file(path)); }

std::string serialize_agenda(const Agenda& a) {
  json j;
  j["format"] = kFormat;
  j["id"] = a.id;
  j["title"] = a.title;
  j["settings"] = {{"threshold1", a.settings.threshold1},
                   {"threshold2", a.settings.threshold2},
                   {"max_digressions_per_topic", a.settings.max_digressions_per_topic},
                   {"rng_seed", a.settings.rng_seed}};
  const auto& p = a.phrases;
  j["phrases"] = {{"greeting", p.greeting},       {"closing", p.closing},
                  {"steer_back", p.steer_back},   {"repeat_prefix", p.repeat_prefix},
                  {"clarify", p.clarify},         {"dodge", p.dodge},
                  {"gibberish", p.gibberish},     {"move_on", p.move_on},
                  {"rating_reprompt", p.rating_reprompt}};
  j["global_fallbacks"] = a.global_fallbacks;
  json topics = json::array();
  for (const auto& t : a.topics) {
    json tj;
    tj["id"] = t.id;
    tj["order"] = t.order;
    tj["question"] = t.question_text;
    if (!t.intro.empty()) tj["intro"] = t.intro;
    tj["kind"] = t.kind == TopicKind::kOpenEnded ? "open_ended" : "rating_1_to_5";
    if (t.bundle_ref) tj["bundle"] = *t.bundle_ref;
    if (!t.templates.empty()) {
      json templates = json::object();
      for (const auto& [intent, by_technique] : t.templates) {
        json entry = json::object();
        for (const auto& [technique, list] : by_technique) {
          entry[std::string(technique_name(technique))] = list;
        }
        templates[intent] = std::move(entry);
      }
      tj["templates"] = std::move(templates);
    }
    tj["default_templates"] = t.default_templates;
    tj["encourage_templates"] = t.encourage_templates;
    if (!t.deflections.empty()) tj["deflections"] = t.deflections;
    tj["max_digressions"] = t.max_digressions;
    tj["ask_rating"] = t.ask_rating;
    topics.push_back(std::move(tj));
  }
  j["topics"] = std::move(topics);
  return j.dump(2) + "\n";
}

std::string Violation::describe() const {
  switch (kind) {
    case Kind::kNoTopics: return "agenda must contain at least one topic";
    case Kind::kDuplicateTopicId: return "duplicate topic id '" + subject + "'";
    case Kind::kOrderNotIncreasing: return "topic '" + subject + "' is out of order";
    case Kind::kEmptyQuestion: return "topic '" + subject + "' has an empty question";
    case Kind::kNoDefaultTemplates: return "topic '" + subject + "' has no default templates";
    case Kind::kNoGlobalFallbacks: return "agenda has no global fallback templates";
    case Kind::kThresholdOutOfRange: return "threshold " + subject + " is outside [0,1]";
    case Kind::kNegativeDigressions:
      return "topic '" + subject + "' has a negative digression limit";
    case Kind::kDanglingBundle: return "bundle '" + subject + "' is not registered";
    case Kind::kMissingTemplates: return "intent '" + subject + "' has no response templates";
    case Kind::kBundleTopicMismatch:
      return "bundle '" + subject + "' is bound to a different topic";
  }
  return "unknown violation";
}

std::shared_ptr<const IntentModelBundle> resolve_bundle(const Topic& topic,
                                                        const BundleRegistry& registry) {
  if (topic.bundle) return topic.bundle;
  if (!topic.bundle_ref) return nullptr;
  auto it = registry.find(*topic.bundle_ref);
  return it == registry.end() ? nullptr : it->second;
}

std::vector<Violation> validate_agenda(const Agenda& agenda, const BundleRegistry& registry) {
  using K = Violation::Kind;
  std::vector<Violation> out;
  if (agenda.topics.empty()) out.push_back({K::kNoTopics, agenda.id});
  if (agenda.global_fallbacks.empty()) out.push_back({K::kNoGlobalFallbacks, agenda.id});
  const auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(agenda.settings.threshold1)) out.push_back({K::kThresholdOutOfRange, "threshold1"});
  if (!in_unit(agenda.settings.threshold2)) out.push_back({K::kThresholdOutOfRange, "threshold2"});

  std::set<std::string> seen;
  std::optional<int> previous_order;
  for (const auto& topic : agenda.topics) {
    if (!seen.insert(topic.id).second) out.push_back({K::kDuplicateTopicId, topic.id});
    if (previous_order && topic.order <= *previous_order) {
      out.push_back({K::kOrderNotIncreasing, topic.id});
    }
    previous_order = topic.order;
    if (text::trim(topic.question_text).empty()) out.push_back({K::kEmptyQuestion, topic.id});
    if (topic.default_templates.empty()) out.push_back({K::kNoDefaultTemplates, topic.id});
    if (topic.max_digressions < 0) out.push_back({K::kNegativeDigressions, topic.id});

    if (!topic.bundle_ref && !topic.bundle) continue;
    auto bundle = resolve_bundle(topic, registry);
    if (!bundle) {
      out.push_back({K::kDanglingBundle, *topic.bundle_ref});
      continue;
    }
    if (bundle->topic_id != topic.id) out.push_back({K::kBundleTopicMismatch, bundle->id});
    if (!in_unit(bundle->threshold1)) out.push_back({K::kThresholdOutOfRange, bundle->id + ".threshold1"});
    if (!in_unit(bundle->threshold2)) out.push_back({K::kThresholdOutOfRange, bundle->id + ".threshold2"});
    if (topic.kind != TopicKind::kOpenEnded) continue;
    for (const auto& intent : bundle->intents) {
      bool has_any = false;
      if (auto it = topic.templates.find(intent.intent_id); it != topic.templates.end()) {
        for (const auto& [technique, list] : it->second) has_any |= !list.empty();
      }
      if (!has_any) out.push_back({K::kMissingTemplates, intent.intent_id});
    }
  }
  return out;
}

}  // namespace attentive
