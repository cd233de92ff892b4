#include <doctest.h>

#include <cmath>
#include <map>

#include "attentive/dialog.hpp"
#include "attentive/error.hpp"
#include "attentive/text.hpp"
#include "support.hpp"

using namespace attentive;

namespace {

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::kIoError;
}

// Independent interpolated character trigram scorer over the same folding:
// letters, '0' for digits, single spaces, '$' marks the end of a passage.
class TrigramOracle {
 public:
  void add(const std::string& raw) {
    const auto s = folded(raw);
    if (s.size() <= 2) return;
    for (std::size_t i = 2; i < s.size(); ++i) {
      ++tri_[s.substr(i - 2, 3)];
      ++ctx2_[s.substr(i - 2, 2)];
      ++bi_[s.substr(i - 1, 2)];
      ++ctx1_[s.substr(i - 1, 1)];
      ++uni_[s.substr(i, 1)];
      ++total_;
    }
  }

  double score(const std::string& raw) const {
    const auto s = folded(raw);
    double sum = 0;
    int n = 0;
    for (std::size_t i = 2; i < s.size(); ++i) {
      const double c2 = get(ctx2_, s.substr(i - 2, 2));
      const double c1 = get(ctx1_, s.substr(i - 1, 1));
      const double p3 = c2 > 0 ? get(tri_, s.substr(i - 2, 3)) / c2 : 0.0;
      const double p2 = c1 > 0 ? get(bi_, s.substr(i - 1, 2)) / c1 : 0.0;
      const double p1 = (get(uni_, s.substr(i, 1)) + 1.0) / (total_ + 29.0);
      sum += std::log(0.6 * p3 + 0.3 * p2 + 0.1 * p1);
      ++n;
    }
    return sum / n;
  }

 private:
  static std::string folded(const std::string& raw) {
    std::string out = "  ";
    bool gap = false;
    for (unsigned char c : raw) {
      if (std::isalpha(c) && c < 128) {
        if (gap && out.size() > 2) out += ' ';
        gap = false;
        out += static_cast<char>(std::tolower(c));
      } else if (std::isdigit(c)) {
        if (gap && out.size() > 2) out += ' ';
        gap = false;
        out += '0';
      } else if (c != '\'') {
        gap = true;
      }
    }
    return out + "$";
  }
  static double get(const std::map<std::string, double>& m, const std::string& k) {
    const auto it = m.find(k);
    return it == m.end() ? 0.0 : it->second;
  }
  std::map<std::string, double> tri_, ctx2_, bi_, ctx1_, uni_;
  double total_ = 0;
};

struct Harness {
  std::shared_ptr<DialogEngine> engine;
  Session session;
  std::int64_t clock = 0;

  explicit Harness(Agenda agenda, std::uint64_t seed = 42, const BundleRegistry& registry = {},
                   std::shared_ptr<const EncoderModel> encoder = nullptr)
      : engine(std::make_shared<DialogEngine>(std::move(agenda), registry, testing::side_talk(),
                                              std::move(encoder))),
        session(engine->start_session("s1", seed, 0)) {}

  BotReply say(const std::string& text) { return engine->handle_message(session, text, clock += 1000); }
};

Agenda rating_agenda() {
  return parse_agenda(R"({"format":"attentive-agenda/1","id":"r","topics":[
    {"id":"open","question":"Tell me something?","default_templates":["Thanks."]},
    {"id":"score","question":"Rate me from 1 to 5?","kind":"rating_1_to_5",
     "default_templates":["Noted."]},
    {"id":"last","question":"Anything else?","default_templates":["Thanks."]}]})");
}

}  // namespace

TEST_CASE("turn kinds from the side-talk rules") {
  Harness h(testing::books_agenda());
  const std::map<std::string, TurnKind> expected{
      {"What was your question?", TurnKind::kRepeatRequest},
      {"I don't know. What about you?", TurnKind::kQuestionToBot},
      {"asdkjh qweqw zzzk", TurnKind::kGibberish},
      {"It's really hard to say since I read a lot.", TurnKind::kDodge},
      {"I guess my favorite kind would be sci-fis.", TurnKind::kAnswer},
      {"what do you mean?", TurnKind::kClarifyRequest},
      {"Can you repeat that?", TurnKind::kRepeatRequest},
      {"do you read books?", TurnKind::kQuestionToBot},
      {"Are you a robot?", TurnKind::kQuestionToBot},
      {"why would you care?", TurnKind::kQuestionToBot},
      {"I don't know", TurnKind::kDodge},
      {"pass", TurnKind::kDodge},
      {"I read mystery novels and sometimes history books about ancient Rome.", TurnKind::kAnswer},
      // Seven content words after stopword removal stays a dodge; eight is an answer.
      {"I don't know much about poetry but I love long novels about families and history",
       TurnKind::kDodge},
      {"I don't know much about poetry but I love long novels about families, history and war",
       TurnKind::kAnswer},
      {"Do I like books? Yes I do.", TurnKind::kAnswer},
      {"42", TurnKind::kAnswer},
  };
  for (const auto& [text, kind] : expected) {
    CAPTURE(text);
    CHECK(turn_kind_name(h.engine->classify_turn(h.session, text)) == turn_kind_name(kind));
  }
}

TEST_CASE("gibberish score matches an independent trigram oracle") {
  const auto agenda = testing::books_agenda();
  const auto& config = testing::side_talk();
  TrigramOracle oracle;
  for (const auto& p : config.reference_corpus) oracle.add(p);
  for (const auto& p : agenda_text(agenda)) oracle.add(p);
  const SideTalkDetector detector(config, agenda_text(agenda));
  REQUIRE(config.reference_corpus.size() > 50);

  for (const char* s : {"asdkjh qweqw zzzk", "I guess my favorite kind would be sci-fis.",
                        "What types of books do you like to read?", "xq", "zzzzzzzz", "room 101"}) {
    CAPTURE(s);
    CHECK(detector.gibberish_score(s) == doctest::Approx(oracle.score(s)).epsilon(1e-12));
  }
  const double g = oracle.score("asdkjh qweqw zzzk");
  MESSAGE("gibberish score: " << g);
  CHECK(g < config.gibberish_threshold);
  CHECK(detector.is_gibberish("asdkjh qweqw zzzk"));
  CHECK_FALSE(detector.is_gibberish("zq"));
  CHECK_FALSE(detector.is_gibberish("I like reading science fiction and fantasy."));
}

TEST_CASE("character folding") {
  CHECK(CharTrigramModel::fold("Don't STOP, 2 me!!") == "dont stop 0 me");
  CHECK(CharTrigramModel::fold("...") == "");
  CHECK(CharTrigramModel::fold("  a  b  ") == "a b");
}

TEST_CASE("side-talk config") {
  CHECK(testing::side_talk().gibberish_threshold == -3.8);
  CHECK(code_of([] { SideTalkConfig::parse(R"({"format":"other"})", "."); }) ==
        Errc::kVersionMismatch);
  CHECK(code_of([] { SideTalkConfig::parse("{", "."); }) == Errc::kParseError);
  const auto bad = SideTalkConfig::parse(R"({"format":"attentive-sidetalk/1","dodge":["(unclosed"]})", ".");
  CHECK(code_of([&] { SideTalkDetector(bad, {}); }) == Errc::kValidationError);
}

TEST_CASE("rating parser") {
  CHECK(parse_rating("4") == 4);
  CHECK(parse_rating("I'd say four.") == 4);
  CHECK(parse_rating("5/5") == 5);
  CHECK(parse_rating("3 or 4") == std::nullopt);
  CHECK(parse_rating("six") == std::nullopt);
  CHECK(parse_rating("10") == std::nullopt);
  CHECK(parse_rating("great") == std::nullopt);
  CHECK(parse_rating("2, definitely 2") == 2);
}

TEST_CASE("session start") {
  const auto agenda = testing::interview_agenda();
  const DialogEngine engine(agenda, {}, testing::side_talk());
  const auto a = engine.start_session("x", 42, 1000);
  const auto b = engine.start_session("x", 42, 1000);
  CHECK(a == b);
  CHECK(a.pending);
  CHECK(a.cursor == 0);
  REQUIRE(a.transcript.size() == 1);
  const auto& greeting = a.transcript[0];
  CHECK(greeting.speaker == Speaker::kBot);
  CHECK(greeting.act == BotAct::kGreeting);
  const auto& q = agenda.topics[0].question_text;
  CHECK(greeting.text.size() > q.size());
  CHECK(greeting.text.compare(greeting.text.size() - q.size(), q.size(), q) == 0);

  auto broken = agenda;
  broken.topics[0].default_templates.clear();
  CHECK(code_of([&] { DialogEngine(broken, {}, testing::side_talk()); }) == Errc::kInvalidAgenda);

  const auto fp = testing::small_encoder()->fingerprint();
  auto bound = bind_bundle(agenda, "q1",
                           testing::stub_bundle("q1", fp, testing::constant(fp, 0.9), {}));
  CHECK(code_of([&] { DialogEngine(bound, {}, testing::side_talk()); }) == Errc::kInvalidAgenda);
}

TEST_CASE("nonlinear exchange on the reading topic") {
  Harness h(testing::books_agenda(), 7);
  CHECK(h.session.transcript[0].text ==
        "Hi, thanks for chatting with me today! I'd love to learn what kind of reader you are. "
        "What types of books do you like to read?");

  auto r = h.say("I don't know. What about you?");
  CHECK(r.kind == TurnKind::kQuestionToBot);
  CHECK(r.messages == std::vector<std::string>{
                          "Sorry, I cannot read yet. Could we go back to my question?"});
  r = h.say("What was your question?");
  CHECK(r.kind == TurnKind::kRepeatRequest);
  CHECK(r.messages ==
        std::vector<std::string>{"I was asking: What types of books do you like to read?"});
  r = h.say("It's really hard to say since I read a lot.");
  CHECK(r.kind == TurnKind::kDodge);
  CHECK(r.messages == std::vector<std::string>{"No worries, just share what's on your mind."});
  CHECK(h.session.pending);
  CHECK(h.session.digressions_on_topic == 3);
  r = h.say("I guess my favorite kind would be sci-fis.");
  CHECK(r.kind == TurnKind::kAnswer);
  CHECK(r.done);
  CHECK(h.session.answers.at("books") == "I guess my favorite kind would be sci-fis.");
  REQUIRE(r.messages.size() == 2);
  CHECK(r.messages[1] == "That was my last question. Thank you so much for sharing!");
  CHECK(code_of([&] { h.say("hello?"); }) == Errc::kSessionDone);
}

TEST_CASE("digression cap records the message and advances") {
  Harness h(testing::interview_agenda());
  for (int i = 0; i < 3; ++i) {
    const auto r = h.say("I don't know");
    CHECK(r.kind == TurnKind::kDodge);
    CHECK(h.session.cursor == 0);
  }
  const auto r = h.say("I don't know");
  CHECK(h.session.cursor == 1);
  CHECK(h.session.answers.at("q1") == "I don't know");
  CHECK(r.rating_request == "q1");
  REQUIRE(r.messages.size() == 2);
  CHECK(r.messages[1] == "What do you enjoy doing in your spare time?");
  CHECK(h.session.digressions_on_topic == 0);
}

TEST_CASE("gibberish is prompted once") {
  Harness h(testing::interview_agenda());
  auto r = h.say("asdkjh qweqw zzzk");
  CHECK(r.kind == TurnKind::kGibberish);
  CHECK(h.session.transcript.back().act == BotAct::kGibberishPrompt);
  r = h.say("qwzx vbnk jjjq");
  CHECK(r.kind == TurnKind::kGibberish);
  CHECK(h.session.transcript.back().act == BotAct::kEncourage);
  CHECK(h.session.cursor == 0);
}

TEST_CASE("clarify restates the question") {
  Harness h(testing::interview_agenda());
  const auto r = h.say("what do you mean?");
  REQUIRE(r.messages.size() == 1);
  const std::string suffix = "I was asking: Could you tell me about yourself in 2-3 sentences?";
  CHECK(r.messages[0].ends_with(suffix));
  CHECK(h.session.transcript.back().act == BotAct::kClarify);
}

TEST_CASE("pending question") {
  Harness h(testing::interview_agenda());
  for (const char* a : {"I am a student", "I like cooking", "I am patient"}) h.say(a);
  CHECK(h.engine->pending_question(h.session) == "What is the biggest challenge you face now?");
  CHECK(h.engine->pending_question(h.session) == h.engine->pending_question(h.session));
  Session idle = h.session;
  idle.pending = false;
  CHECK(code_of([&] { h.engine->pending_question(idle); }) == Errc::kNoPendingQuestion);
}

TEST_CASE("bundle-free topics use default templates") {
  const auto agenda = testing::interview_agenda();
  Harness h(agenda);
  const auto r = h.say("I study biology and work part time at a cafe");
  const auto& defaults = agenda.topics[0].default_templates;
  CHECK(std::find(defaults.begin(), defaults.end(), r.messages[0]) != defaults.end());
  const auto& user = h.session.transcript[1];
  CHECK(user.speaker == Speaker::kUser);
  CHECK_FALSE(user.interpretation);
  CHECK(h.session.transcript[2].source == ResponseSource::kDefault);
}

TEST_CASE("bundled topic answers through the stub models") {
  const auto encoder = testing::small_encoder();
  const auto fp = encoder->fingerprint();
  auto agenda = bind_bundle(
      testing::interview_agenda(), "q1",
      testing::stub_bundle("q1", fp, testing::constant(fp, 0.9),
                           {{"c1", testing::keyword(fp, "work")},
                            {"c2", testing::keyword(fp, "family")},
                            {"c3", testing::keyword(fp, "active")}}));
  Harness h(agenda, 3, {}, encoder);
  const auto r = h.say("I work and study");
  const auto& pool = agenda.topics[0].templates.at("c1");
  bool found = false;
  for (const auto& [technique, list] : pool) {
    found |= std::find(list.begin(), list.end(), r.messages[0]) != list.end();
  }
  CHECK(found);
  REQUIRE(h.session.transcript[1].interpretation);
  CHECK(h.session.transcript[1].interpretation->best_intent == "c1");
}

TEST_CASE("rating topics") {
  SUBCASE("a number is recorded") {
    Harness h(rating_agenda());
    h.say("I like trains");
    const auto r = h.say("I'd give it a four");
    CHECK(h.session.ratings.at("score") == 4);
    CHECK(h.session.cursor == 2);
    CHECK(r.kind == TurnKind::kAnswer);
  }
  SUBCASE("one reprompt, then recorded as absent") {
    Harness h(rating_agenda());
    h.say("I like trains");
    auto r = h.say("it was fine");
    CHECK(h.session.transcript.back().act == BotAct::kRatingReprompt);
    CHECK(h.session.cursor == 1);
    r = h.say("still fine");
    CHECK(h.session.cursor == 2);
    CHECK_FALSE(h.session.ratings.contains("score"));
  }
}

TEST_CASE("message preconditions") {
  Harness h(testing::interview_agenda());
  CHECK(code_of([&] { h.say("   \n\t"); }) == Errc::kEmptyMessage);
  CHECK(code_of([&] { h.engine->handle_message(h.session, "hello", -5); }) ==
        Errc::kTimestampRegression);
  const auto before = h.session;
  CHECK(code_of([&] { h.say(""); }) == Errc::kEmptyMessage);
  CHECK(h.session == before);
}

TEST_CASE("listening templates do not repeat back to back") {
  auto agenda = testing::interview_agenda();
  for (auto& t : agenda.topics) t.default_templates = {"A.", "B."};
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Harness h(agenda, seed);
    std::string previous;
    while (!h.session.done) {
      const auto r = h.say("Something about my week and my plans");
      CHECK(r.messages[0] != previous);
      previous = r.messages[0];
    }
  }
}

TEST_CASE("every session finishes within the turn bound") {
  const std::vector<std::string> moves{"What was your question?", "what do you mean?",
                                       "What about you?", "I don't know", "asdkjh qweqw zzzk",
                                       "I enjoy running and reading"};
  const auto agenda = testing::interview_agenda();
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Harness h(agenda, seed);
    Rng rng(seed);
    std::size_t turns = 0;
    while (!h.session.done) {
      h.say(moves[uniform_index(rng, moves.size())]);
      ++turns;
      REQUIRE(turns <= h.engine->max_user_turns());
    }
  }
}

TEST_CASE("names round-trip") {
  for (auto k : {TurnKind::kAnswer, TurnKind::kQuestionToBot, TurnKind::kRepeatRequest,
                 TurnKind::kClarifyRequest, TurnKind::kDodge, TurnKind::kGibberish}) {
    CHECK(parse_turn_kind(turn_kind_name(k)) == k);
  }
  CHECK(turn_kind_name(TurnKind::kQuestionToBot) == "QUESTION_TO_BOT");
  for (auto a : {BotAct::kGreeting, BotAct::kQuestion, BotAct::kRepeatQuestion, BotAct::kDeflect,
                 BotAct::kClarify, BotAct::kEncourage, BotAct::kGibberishPrompt,
                 BotAct::kListeningResponse, BotAct::kMoveOn, BotAct::kRatingReprompt,
                 BotAct::kClosing}) {
    CHECK(parse_bot_act(bot_act_name(a)) == a);
  }
  CHECK_FALSE(parse_turn_kind("CHITCHAT"));
}
