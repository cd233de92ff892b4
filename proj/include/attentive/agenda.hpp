#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace attentive {

struct IntentModelBundle;

/// Active-listening response techniques.
enum class Technique { kParaphrasing, kVerbalizingEmotions, kSummarizing, kEncouraging };

std::string_view technique_name(Technique t);
std::optional<Technique> parse_technique(std::string_view name);

enum class TopicKind { kOpenEnded, kRating };

struct AgendaSettings {
  double threshold1 = 0.5;
  double threshold2 = 0.6;
  int max_digressions_per_topic = 3;
  std::uint64_t rng_seed = 0;

  bool operator==(const AgendaSettings&) const = default;
};

/// Fixed bot phrases used for side talk. Each list is picked from at random.
struct Phrases {
  std::vector<std::string> greeting{"Hi, thanks for chatting with me today!"};
  std::vector<std::string> closing{"That was my last question. Thank you so much for sharing!"};
  std::string steer_back = "Could we go back to my question?";
  std::string repeat_prefix = "I was asking: ";
  std::vector<std::string> clarify{"Sorry if I was unclear, I'd simply like to hear your own thoughts."};
  std::vector<std::string> dodge{"No worries, just share what's on your mind."};
  std::vector<std::string> gibberish{"Sorry, I didn't quite catch that. Could you answer in a few words?"};
  std::vector<std::string> move_on{"Thanks. Let's move on."};
  std::string rating_reprompt = "Please answer with a number from 1 (poor) to 5 (excellent).";

  bool operator==(const Phrases&) const = default;
};

/// intent id -> technique -> response templates.
using TemplateMap = std::map<std::string, std::map<Technique, std::vector<std::string>>>;

struct Topic {
  std::string id;
  /// Position in the agenda; strictly increasing across topics.
  int order = 0;
  std::string question_text;
  /// Optional lead-in spoken before the question the first time it is asked.
  std::string intro;
  TopicKind kind = TopicKind::kOpenEnded;
  std::optional<std::string> bundle_ref;
  TemplateMap templates;
  std::vector<std::string> default_templates;
  std::vector<std::string> encourage_templates;
  /// Topic-specific deflections for questions addressed to the bot; the
  /// agenda's global_fallbacks are used when empty.
  std::vector<std::string> deflections;
  int max_digressions = 3;
  /// Whether the interviewee is asked to rate comprehension after this topic.
  bool ask_rating = false;
  /// Attached by bind_bundle; resolved from the registry otherwise.
  std::shared_ptr<const IntentModelBundle> bundle;

  bool operator==(const Topic&) const = default;
};

struct Agenda {
  std::string id;
  std::string title;
  std::vector<Topic> topics;
  std::vector<std::string> global_fallbacks;
  AgendaSettings settings;
  Phrases phrases;

  const Topic* find_topic(std::string_view topic_id) const;

  bool operator==(const Agenda&) const = default;
};

/// Parses an agenda file (JSON, format tag "attentive-agenda/1"). Missing
/// optional fields take their defaults; a topic without max_digressions
/// inherits settings.max_digressions_per_topic. Throws ParseError for
/// malformed input and Error(kValidationError) when a structural invariant
/// (at least one topic, unique ids) does not hold.
Agenda parse_agenda(std::string_view text);
Agenda load_agenda(const std::string& path);

/// Canonical JSON form; parse_agenda(serialize_agenda(a)) == a for agendas
/// without attached bundles.
std::string serialize_agenda(const Agenda& agenda);

struct Violation {
  enum class Kind {
    kNoTopics,
    kDuplicateTopicId,
    kOrderNotIncreasing,
    kEmptyQuestion,
    kNoDefaultTemplates,
    kNoGlobalFallbacks,
    kThresholdOutOfRange,
    kNegativeDigressions,
    kDanglingBundle,
    kMissingTemplates,
    kBundleTopicMismatch,
  };
  Kind kind;
  /// Topic id, bundle id or intent id the violation is about.
  std::string subject;

  std::string describe() const;
  bool operator==(const Violation&) const = default;
};

using BundleRegistry = std::map<std::string, std::shared_ptr<const IntentModelBundle>>;

/// Returns every invariant violation; empty iff the agenda is runnable
/// against the registry.
std::vector<Violation> validate_agenda(const Agenda& agenda, const BundleRegistry& registry);

/// Bundle in effect for a topic: the attached one, else the registry entry.
std::shared_ptr<const IntentModelBundle> resolve_bundle(const Topic& topic,
                                                        const BundleRegistry& registry);

}  // namespace attentive
