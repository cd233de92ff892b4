#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "attentive/agenda.hpp"
#include "attentive/encoder.hpp"
#include "attentive/listening.hpp"
#include "attentive/random.hpp"

namespace attentive {

enum class TurnKind {
  kAnswer,
  kQuestionToBot,
  kRepeatRequest,
  kClarifyRequest,
  kDodge,
  kGibberish
};

std::string_view turn_kind_name(TurnKind k);
std::optional<TurnKind> parse_turn_kind(std::string_view name);

/// What a bot turn does; recorded so transcripts can be audited.
enum class BotAct {
  kGreeting,
  kQuestion,
  kRepeatQuestion,
  kDeflect,
  kClarify,
  kEncourage,
  kGibberishPrompt,
  kListeningResponse,
  kMoveOn,
  kRatingReprompt,
  kClosing
};

std::string_view bot_act_name(BotAct a);
std::optional<BotAct> parse_bot_act(std::string_view name);

enum class Speaker { kBot, kUser };

struct Turn {
  Speaker speaker = Speaker::kBot;
  std::string text;
  std::int64_t at = 0;
  /// Present iff speaker == kUser.
  std::optional<TurnKind> kind;
  std::optional<Interpretation> interpretation;
  /// Present iff speaker == kBot.
  std::optional<BotAct> act;
  /// For kListeningResponse turns: which template family answered.
  std::optional<ResponseSource> source;
  /// Topic that was pending when the turn happened.
  std::string topic_id;

  bool operator==(const Turn&) const = default;
};

struct Session {
  std::string id;
  std::string agenda_id;
  std::uint64_t seed = 0;
  std::size_t cursor = 0;
  bool pending = false;
  int digressions_on_topic = 0;
  bool gibberish_prompted = false;
  bool rating_reprompted = false;
  std::vector<Turn> transcript;
  /// Text recorded as the answer per topic id.
  std::map<std::string, std::string> answers;
  /// Topic ratings 1-5: rating topics answered in-chat and comprehension
  /// ratings posted for open-ended topics.
  std::map<std::string, int> ratings;
  std::optional<int> interest_rating;
  std::optional<int> chat_rating;
  Rng rng;
  std::string last_template;
  std::int64_t started_at = 0;
  std::int64_t last_activity = 0;
  bool done = false;

  bool operator==(const Session&) const = default;
};

struct BotReply {
  TurnKind kind = TurnKind::kAnswer;
  std::vector<std::string> messages;
  /// Topic pending after this reply; empty once the interview is done.
  std::string topic_id;
  bool done = false;
  /// Topic just completed that asks for a comprehension rating.
  std::optional<std::string> rating_request;
};

/// Side-talk rules: regular expressions matched against the lowercased
/// message, plus limits for the gibberish and hedge checks.
struct SideTalkConfig {
  double gibberish_threshold = -3.8;
  std::size_t gibberish_min_length = 3;
  std::size_t dodge_max_tokens = 8;
  std::vector<std::string> repeat_request;
  std::vector<std::string> clarify_request;
  std::vector<std::string> question_to_bot;
  std::vector<std::string> dodge;
  std::vector<std::string> second_person;
  std::vector<std::string> first_person;
  /// Reference text for the gibberish model, one passage per entry.
  std::vector<std::string> reference_corpus;

  /// Parses a config file; "reference_corpus" names a text file resolved
  /// relative to `base_dir`.
  static SideTalkConfig parse(std::string_view json_text, const std::string& base_dir);
  static SideTalkConfig load(const std::string& path);
};

/// Interpolated character trigram model over a folded alphabet (a-z, a digit
/// class, space, end-of-text).
class CharTrigramModel {
 public:
  static constexpr double kTrigramWeight = 0.6;
  static constexpr double kBigramWeight = 0.3;
  static constexpr double kUnigramWeight = 0.1;

  void add(std::string_view text);
  /// Mean natural-log probability per predicted character.
  double score(std::string_view text) const;

  /// Lowercase letters kept, digits -> '0', runs of anything else -> ' '.
  static std::string fold(std::string_view text);

 private:
  static constexpr std::size_t kAlphabet = 29;
  static std::size_t symbol(char c);

  std::map<std::array<std::uint8_t, 3>, std::uint64_t> trigrams_;
  std::map<std::array<std::uint8_t, 2>, std::uint64_t> bigram_contexts_;
  std::map<std::array<std::uint8_t, 2>, std::uint64_t> bigrams_;
  std::array<std::uint64_t, kAlphabet> unigram_contexts_{};
  std::array<std::uint64_t, kAlphabet> unigrams_{};
  std::uint64_t total_ = 0;
};

class SideTalkDetector {
 public:
  /// `extra_text` (the agenda's own phrasing) is added to the gibberish model
  /// alongside the config's reference corpus.
  SideTalkDetector(SideTalkConfig config, std::span<const std::string> extra_text);

  /// First match wins: gibberish, repeat request, clarification request,
  /// question to the bot, short hedge, otherwise an answer.
  TurnKind classify(std::string_view user_text) const;
  double gibberish_score(std::string_view user_text) const;
  bool is_gibberish(std::string_view user_text) const;
  const SideTalkConfig& config() const { return config_; }

 private:
  static std::vector<std::regex> compile(const std::vector<std::string>& patterns);

  SideTalkConfig config_;
  CharTrigramModel model_;
  std::vector<std::regex> repeat_, clarify_, to_bot_, dodge_;
};

/// Accepts "1".."5" or "one".."five" in a short reply.
std::optional<int> parse_rating(std::string_view text);

/// Executes one agenda. Immutable after construction, so one engine serves any
/// number of sessions concurrently; each Session is mutated by one caller at a
/// time.
class DialogEngine {
 public:
  /// Throws Error(kInvalidAgenda) when validate_agenda reports violations or
  /// a bound bundle needs an encoder that was not supplied.
  DialogEngine(Agenda agenda, const BundleRegistry& registry, const SideTalkConfig& side_talk,
               std::shared_ptr<const EncoderModel> encoder = nullptr);

  const Agenda& agenda() const { return agenda_; }
  const SideTalkDetector& detector() const { return detector_; }

  /// New session at topic 0. The first bot message is a greeting followed by
  /// topic 0's question.
  Session start_session(std::string session_id, std::uint64_t seed, std::int64_t at) const;

  TurnKind classify_turn(const Session& session, std::string_view user_text) const;

  BotReply handle_message(Session& session, std::string_view user_text, std::int64_t at) const;

  std::string pending_question(const Session& session) const;

  /// Upper bound on user turns before any session completes.
  std::size_t max_user_turns() const;

 private:
  std::string ask(const Topic& topic) const;
  std::string pick(Session& session, const std::vector<std::string>& pool) const;
  void say(Session& session, BotReply& reply, std::string text, BotAct act, std::int64_t at,
           std::optional<ResponseSource> source = std::nullopt) const;
  void advance(Session& session, BotReply& reply, std::int64_t at) const;
  void handle_side_talk(Session& session, BotReply& reply, TurnKind kind, std::int64_t at) const;

  Agenda agenda_;
  std::vector<std::shared_ptr<const IntentModelBundle>> bundles_;
  SideTalkDetector detector_;
  std::shared_ptr<const EncoderModel> encoder_;
};

/// Agenda phrasing fed to the gibberish model.
std::vector<std::string> agenda_text(const Agenda& agenda);

}  // namespace attentive
