#include "attentive/dialog.hpp"

#include <cmath>
#include <filesystem>

#include <json.hpp>

#include "attentive/error.hpp"
#include "attentive/text.hpp"

namespace attentive {

using nlohmann::json;

namespace {

constexpr std::string_view kSideTalkFormat = "attentive-sidetalk/1";
constexpr std::string_view kCurlyApostrophe = "\xE2\x80\x99";

// Lowercase with typographic apostrophes folded to ASCII, for pattern matching.
std::string normalize_for_patterns(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw.substr(i, 3) == kCurlyApostrophe) {
      out.push_back('\'');
      i += 2;
      continue;
    }
    const char c = raw[i];
    out.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
  }
  return text::trim(out);
}

bool any_match(const std::vector<std::regex>& patterns, const std::string& s) {
  for (const auto& re : patterns) {
    if (std::regex_search(s, re)) return true;
  }
  return false;
}

bool contains_any(const std::vector<std::string>& tokens, const std::vector<std::string>& words) {
  for (const auto& t : tokens) {
    for (const auto& w : words) {
      if (t == w) return true;
    }
  }
  return false;
}

std::vector<std::string> string_list(const json& j, const char* key) {
  if (!j.contains(key)) return {};
  return j.at(key).get<std::vector<std::string>>();
}

}  // namespace

std::string_view turn_kind_name(TurnKind k) {
  switch (k) {
    case TurnKind::kAnswer: return "ANSWER";
    case TurnKind::kQuestionToBot: return "QUESTION_TO_BOT";
    case TurnKind::kRepeatRequest: return "REPEAT_REQUEST";
    case TurnKind::kClarifyRequest: return "CLARIFY_REQUEST";
    case TurnKind::kDodge: return "DODGE";
    case TurnKind::kGibberish: return "GIBBERISH";
  }
  return "?";
}

std::optional<TurnKind> parse_turn_kind(std::string_view name) {
  for (auto k : {TurnKind::kAnswer, TurnKind::kQuestionToBot, TurnKind::kRepeatRequest,
                 TurnKind::kClarifyRequest, TurnKind::kDodge, TurnKind::kGibberish}) {
    if (turn_kind_name(k) == name) return k;
  }
  return std::nullopt;
}

std::string_view bot_act_name(BotAct a) {
  switch (a) {
    case BotAct::kGreeting: return "greeting";
    case BotAct::kQuestion: return "question";
    case BotAct::kRepeatQuestion: return "repeat_question";
    case BotAct::kDeflect: return "deflect";
    case BotAct::kClarify: return "clarify";
    case BotAct::kEncourage: return "encourage";
    case BotAct::kGibberishPrompt: return "gibberish_prompt";
    case BotAct::kListeningResponse: return "listening_response";
    case BotAct::kMoveOn: return "move_on";
    case BotAct::kRatingReprompt: return "rating_reprompt";
    case BotAct::kClosing: return "closing";
  }
  return "?";
}

std::optional<BotAct> parse_bot_act(std::string_view name) {
  for (int i = 0; i <= static_cast<int>(BotAct::kClosing); ++i) {
    const auto a = static_cast<BotAct>(i);
    if (bot_act_name(a) == name) return a;
  }
  return std::nullopt;
}

SideTalkConfig SideTalkConfig::parse(std::string_view json_text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("side-talk config: ") + e.what(), 0, 0);
  }
  if (j.value("format", "") != kSideTalkFormat) {
    throw Error(Errc::kVersionMismatch,
                "side-talk config is not format " + std::string(kSideTalkFormat));
  }
  SideTalkConfig c;
  try {
    c.gibberish_threshold = j.value("gibberish_threshold", c.gibberish_threshold);
    c.gibberish_min_length = j.value("gibberish_min_length", c.gibberish_min_length);
    c.dodge_max_tokens = j.value("dodge_max_tokens", c.dodge_max_tokens);
    c.repeat_request = string_list(j, "repeat_request");
    c.clarify_request = string_list(j, "clarify_request");
    c.question_to_bot = string_list(j, "question_to_bot");
    c.dodge = string_list(j, "dodge");
    c.second_person = string_list(j, "second_person");
    c.first_person = string_list(j, "first_person");
    if (j.contains("reference_corpus")) {
      const std::filesystem::path p(j.at("reference_corpus").get<std::string>());
      const auto full = p.is_absolute() ? p : std::filesystem::path(base_dir) / p;
      const std::string corpus = text::read_file(full.string());
      for (auto line : text::split_lines(corpus)) {
        if (!text::trim(line).empty()) c.reference_corpus.emplace_back(line);
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("side-talk config: ") + e.what(), 0, 0);
  }
  return c;
}

SideTalkConfig SideTalkConfig::load(const std::string& path) {
  return parse(text::read_file(path), std::filesystem::path(path).parent_path().string());
}

std::string CharTrigramModel::fold(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (char ch : raw) {
    char c = ch;
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    if (c >= 'a' && c <= 'z') {
      out.push_back(c);
    } else if (c >= '0' && c <= '9') {
      out.push_back('0');
    } else if (c == '\'') {
      // "don't" folds to "dont", as in word tokenization.
    } else if (!out.empty() && out.back() != ' ') {
      out.push_back(' ');
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::size_t CharTrigramModel::symbol(char c) {
  if (c >= 'a' && c <= 'z') return static_cast<std::size_t>(c - 'a');
  if (c == '0') return 26;
  if (c == ' ') return 27;
  return 28;  // end of text
}

void CharTrigramModel::add(std::string_view raw) {
  const std::string folded = fold(raw);
  if (folded.empty()) return;
  // Text starts after an implicit word boundary and ends with the end symbol.
  std::uint8_t prev2 = 27;
  std::uint8_t prev1 = 27;
  auto emit = [&](std::uint8_t s) {
    ++trigrams_[{prev2, prev1, s}];
    ++bigram_contexts_[{prev2, prev1}];
    ++bigrams_[{prev1, s}];
    ++unigram_contexts_[prev1];
    ++unigrams_[s];
    ++total_;
    prev2 = prev1;
    prev1 = s;
  };
  for (char c : folded) emit(static_cast<std::uint8_t>(symbol(c)));
  emit(28);
}

double CharTrigramModel::score(std::string_view raw) const {
  const std::string folded = fold(raw);
  std::uint8_t prev2 = 27;
  std::uint8_t prev1 = 27;
  double sum = 0.0;
  std::size_t n = 0;
  auto lookup = [](const auto& m, const auto& key) -> double {
    const auto it = m.find(key);
    return it == m.end() ? 0.0 : static_cast<double>(it->second);
  };
  auto predict = [&](std::uint8_t s) {
    const double ctx2 = lookup(bigram_contexts_, std::array<std::uint8_t, 2>{prev2, prev1});
    const double p3 =
        ctx2 > 0 ? lookup(trigrams_, std::array<std::uint8_t, 3>{prev2, prev1, s}) / ctx2 : 0.0;
    const double ctx1 = static_cast<double>(unigram_contexts_[prev1]);
    const double p2 =
        ctx1 > 0 ? lookup(bigrams_, std::array<std::uint8_t, 2>{prev1, s}) / ctx1 : 0.0;
    const double p1 = (static_cast<double>(unigrams_[s]) + 1.0) /
                      (static_cast<double>(total_) + static_cast<double>(kAlphabet));
    sum += std::log(kTrigramWeight * p3 + kBigramWeight * p2 + kUnigramWeight * p1);
    ++n;
    prev2 = prev1;
    prev1 = s;
  };
  for (char c : folded) predict(static_cast<std::uint8_t>(symbol(c)));
  predict(28);
  return sum / static_cast<double>(n);
}

SideTalkDetector::SideTalkDetector(SideTalkConfig config, std::span<const std::string> extra_text)
    : config_(std::move(config)),
      repeat_(compile(config_.repeat_request)),
      clarify_(compile(config_.clarify_request)),
      to_bot_(compile(config_.question_to_bot)),
      dodge_(compile(config_.dodge)) {
  for (const auto& passage : config_.reference_corpus) model_.add(passage);
  for (const auto& passage : extra_text) model_.add(passage);
}

std::vector<std::regex> SideTalkDetector::compile(const std::vector<std::string>& patterns) {
  std::vector<std::regex> out;
  out.reserve(patterns.size());
  for (const auto& p : patterns) {
    try {
      out.emplace_back(p, std::regex::ECMAScript | std::regex::optimize);
    } catch (const std::regex_error& e) {
      throw Error(Errc::kValidationError, "bad side-talk pattern '" + p + "': " + e.what());
    }
  }
  return out;
}

double SideTalkDetector::gibberish_score(std::string_view user_text) const {
  return model_.score(user_text);
}

bool SideTalkDetector::is_gibberish(std::string_view user_text) const {
  const std::string folded = CharTrigramModel::fold(user_text);
  if (folded.size() < config_.gibberish_min_length) return false;
  return model_.score(user_text) < config_.gibberish_threshold;
}

TurnKind SideTalkDetector::classify(std::string_view user_text) const {
  if (is_gibberish(user_text)) return TurnKind::kGibberish;
  const std::string s = normalize_for_patterns(user_text);
  if (any_match(repeat_, s)) return TurnKind::kRepeatRequest;
  if (any_match(clarify_, s)) return TurnKind::kClarifyRequest;
  if (any_match(to_bot_, s)) return TurnKind::kQuestionToBot;
  const auto tokens = text::words(s);
  if (!s.empty() && s.back() == '?' && contains_any(tokens, config_.second_person) &&
      !contains_any(tokens, config_.first_person)) {
    return TurnKind::kQuestionToBot;
  }
  if (any_match(dodge_, s)) {
    std::size_t content = 0;
    for (const auto& t : tokens) {
      if (!text::default_stopwords().contains(t)) ++content;
    }
    if (content < config_.dodge_max_tokens) return TurnKind::kDodge;
  }
  return TurnKind::kAnswer;
}

std::optional<int> parse_rating(std::string_view raw) {
  static constexpr std::array<std::string_view, 5> kWords{"one", "two", "three", "four", "five"};
  std::optional<int> found;
  for (const auto& token : text::words(raw)) {
    std::optional<int> value;
    if (token.size() == 1 && token[0] >= '1' && token[0] <= '5') value = token[0] - '0';
    for (std::size_t i = 0; i < kWords.size(); ++i) {
      if (token == kWords[i]) value = static_cast<int>(i) + 1;
    }
    if (!value) continue;
    // Two different numbers ("3 or 4") are ambiguous.
    if (found && *found != *value) return std::nullopt;
    found = value;
  }
  return found;
}

std::vector<std::string> agenda_text(const Agenda& agenda) {
  std::vector<std::string> out;
  auto add_all = [&](const std::vector<std::string>& v) { out.insert(out.end(), v.begin(), v.end()); };
  for (const auto& t : agenda.topics) {
    out.push_back(t.question_text);
    if (!t.intro.empty()) out.push_back(t.intro);
    add_all(t.default_templates);
    add_all(t.encourage_templates);
    add_all(t.deflections);
    for (const auto& [intent, by_technique] : t.templates) {
      for (const auto& [technique, list] : by_technique) add_all(list);
    }
  }
  add_all(agenda.global_fallbacks);
  return out;
}

DialogEngine::DialogEngine(Agenda agenda, const BundleRegistry& registry,
                           const SideTalkConfig& side_talk,
                           std::shared_ptr<const EncoderModel> encoder)
    : agenda_(std::move(agenda)),
      detector_(side_talk, agenda_text(agenda_)),
      encoder_(std::move(encoder)) {
  const auto violations = validate_agenda(agenda_, registry);
  if (!violations.empty()) {
    std::string message = "agenda '" + agenda_.id + "' is invalid:";
    for (const auto& v : violations) message += " " + v.describe() + ";";
    message.pop_back();
    throw Error(Errc::kInvalidAgenda, message);
  }
  for (const auto& topic : agenda_.topics) {
    auto bundle = resolve_bundle(topic, registry);
    if (bundle && !encoder_) {
      throw Error(Errc::kInvalidAgenda,
                  "topic '" + topic.id + "' has a bundle but no encoder was supplied");
    }
    bundles_.push_back(std::move(bundle));
  }
}

std::string DialogEngine::ask(const Topic& topic) const {
  return topic.intro.empty() ? topic.question_text : topic.intro + " " + topic.question_text;
}

std::string DialogEngine::pick(Session& session, const std::vector<std::string>& pool) const {
  return pool[pick_template(pool, "", session.rng)];
}

void DialogEngine::say(Session& session, BotReply& reply, std::string message, BotAct act,
                       std::int64_t at, std::optional<ResponseSource> source) const {
  Turn turn;
  turn.speaker = Speaker::kBot;
  turn.text = message;
  turn.at = at;
  turn.act = act;
  turn.source = source;
  turn.topic_id = session.cursor < agenda_.topics.size() ? agenda_.topics[session.cursor].id : "";
  session.transcript.push_back(std::move(turn));
  reply.messages.push_back(std::move(message));
}

Session DialogEngine::start_session(std::string session_id, std::uint64_t seed,
                                    std::int64_t at) const {
  Session s;
  s.id = std::move(session_id);
  s.agenda_id = agenda_.id;
  s.seed = seed;
  s.rng.seed(seed);
  s.started_at = at;
  s.last_activity = at;
  s.pending = true;
  BotReply ignored;
  say(s, ignored, pick(s, agenda_.phrases.greeting) + " " + ask(agenda_.topics.front()),
      BotAct::kGreeting, at);
  return s;
}

TurnKind DialogEngine::classify_turn(const Session&, std::string_view user_text) const {
  return detector_.classify(user_text);
}

std::string DialogEngine::pending_question(const Session& session) const {
  if (!session.pending || session.cursor >= agenda_.topics.size()) {
    throw Error(Errc::kNoPendingQuestion, "session '" + session.id + "' has no pending question");
  }
  return agenda_.topics[session.cursor].question_text;
}

std::size_t DialogEngine::max_user_turns() const {
  std::size_t total = 0;
  for (const auto& t : agenda_.topics) total += static_cast<std::size_t>(t.max_digressions) + 1;
  return total;
}

void DialogEngine::advance(Session& session, BotReply& reply, std::int64_t at) const {
  const Topic& finished = agenda_.topics[session.cursor];
  if (finished.ask_rating) reply.rating_request = finished.id;
  ++session.cursor;
  session.digressions_on_topic = 0;
  session.gibberish_prompted = false;
  session.rating_reprompted = false;
  if (session.cursor == agenda_.topics.size()) {
    session.pending = false;
    session.done = true;
    say(session, reply, pick(session, agenda_.phrases.closing), BotAct::kClosing, at);
    return;
  }
  say(session, reply, ask(agenda_.topics[session.cursor]), BotAct::kQuestion, at);
}

void DialogEngine::handle_side_talk(Session& session, BotReply& reply, TurnKind kind,
                                    std::int64_t at) const {
  const Topic& topic = agenda_.topics[session.cursor];
  const Phrases& phrases = agenda_.phrases;
  switch (kind) {
    case TurnKind::kRepeatRequest:
      say(session, reply, phrases.repeat_prefix + topic.question_text, BotAct::kRepeatQuestion, at);
      return;
    case TurnKind::kClarifyRequest:
      say(session, reply,
          pick(session, phrases.clarify) + " " + phrases.repeat_prefix + topic.question_text,
          BotAct::kClarify, at);
      return;
    case TurnKind::kQuestionToBot: {
      const auto& pool = topic.deflections.empty() ? agenda_.global_fallbacks : topic.deflections;
      say(session, reply, pick(session, pool) + " " + phrases.steer_back, BotAct::kDeflect, at);
      return;
    }
    case TurnKind::kGibberish:
      if (!session.gibberish_prompted) {
        session.gibberish_prompted = true;
        say(session, reply, pick(session, phrases.gibberish), BotAct::kGibberishPrompt, at);
        return;
      }
      [[fallthrough]];
    case TurnKind::kDodge:
      say(session, reply, pick(session, phrases.dodge), BotAct::kEncourage, at);
      return;
    case TurnKind::kAnswer:
      break;
  }
}

BotReply DialogEngine::handle_message(Session& session, std::string_view user_text,
                                      std::int64_t at) const {
  if (session.done) throw Error(Errc::kSessionDone, "session '" + session.id + "' is finished");
  const std::string message = text::trim(user_text);
  if (message.empty()) throw Error(Errc::kEmptyMessage, "message is empty");
  if (at < session.last_activity) {
    throw Error(Errc::kTimestampRegression, "timestamp " + std::to_string(at) + " precedes " +
                                                std::to_string(session.last_activity));
  }
  session.last_activity = at;

  const std::size_t topic_index = session.cursor;
  const Topic& topic = agenda_.topics[topic_index];
  BotReply reply;

  Turn user;
  user.speaker = Speaker::kUser;
  user.text = message;
  user.at = at;
  user.topic_id = topic.id;

  std::optional<int> rating;
  if (topic.kind == TopicKind::kRating) rating = parse_rating(message);
  const TurnKind kind = rating ? TurnKind::kAnswer : classify_turn(session, message);
  user.kind = kind;
  reply.kind = kind;

  if (topic.kind == TopicKind::kRating) {
    session.transcript.push_back(std::move(user));
    if (rating) {
      session.ratings[topic.id] = *rating;
      session.answers[topic.id] = message;
      advance(session, reply, at);
    } else {
      ++session.digressions_on_topic;
      if (session.rating_reprompted || session.digressions_on_topic > topic.max_digressions) {
        // Recorded as absent: no entry in ratings.
        say(session, reply, pick(session, agenda_.phrases.move_on), BotAct::kMoveOn, at);
        advance(session, reply, at);
      } else {
        session.rating_reprompted = true;
        say(session, reply, agenda_.phrases.rating_reprompt, BotAct::kRatingReprompt, at);
      }
    }
    reply.topic_id = session.done ? "" : agenda_.topics[session.cursor].id;
    reply.done = session.done;
    return reply;
  }

  if (kind == TurnKind::kAnswer) {
    Interpretation interp;
    const auto& bundle = bundles_[topic_index];
    if (bundle) {
      interp = interpret(*bundle, *encoder_, message);
      user.interpretation = interp;
    } else {
      interp.decision = Decision::kIrrelevant;
    }
    session.transcript.push_back(std::move(user));
    session.answers[topic.id] = message;
    const auto response = generate_response(topic, interp, session.rng, session.last_template);
    session.last_template = response.text;
    say(session, reply, response.text, BotAct::kListeningResponse, at, response.source);
    advance(session, reply, at);
  } else {
    session.transcript.push_back(std::move(user));
    ++session.digressions_on_topic;
    if (session.digressions_on_topic > topic.max_digressions) {
      session.answers[topic.id] = message;
      say(session, reply, pick(session, agenda_.phrases.move_on), BotAct::kMoveOn, at);
      advance(session, reply, at);
    } else {
      handle_side_talk(session, reply, kind, at);
    }
  }
  reply.topic_id = session.done ? "" : agenda_.topics[session.cursor].id;
  reply.done = session.done;
  return reply;
}

}  // namespace attentive
