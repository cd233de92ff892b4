#include <doctest.h>

#include "attentive/agenda.hpp"
#include "attentive/error.hpp"
#include "attentive/listening.hpp"
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

std::string message_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("minimal agenda gets defaults") {
  const auto a = parse_agenda(R"({
    "format": "attentive-agenda/1", "id": "mini",
    "topics": [{"id": "Q2", "question": "What do you enjoy doing in your spare time?",
                "default_templates": ["Thanks."]}]})");
  REQUIRE(a.topics.size() == 1);
  const auto& t = a.topics[0];
  CHECK(t.id == "Q2");
  CHECK(t.question_text == "What do you enjoy doing in your spare time?");
  CHECK(t.kind == TopicKind::kOpenEnded);
  CHECK(t.max_digressions == 3);
  CHECK_FALSE(t.ask_rating);
  CHECK(a.settings.threshold1 == 0.5);
  CHECK(a.settings.threshold2 == 0.6);
  CHECK_FALSE(a.global_fallbacks.empty());
  CHECK(validate_agenda(a, {}).empty());
}

TEST_CASE("structural errors") {
  CHECK(code_of([] { parse_agenda(R"({"format":"attentive-agenda/1","id":"x","topics":[]})"); }) ==
        Errc::kValidationError);
  CHECK(message_of([] { parse_agenda(R"({"format":"attentive-agenda/1","id":"x","topics":[]})"); })
            .find("at least one topic") != std::string::npos);
  const auto dup = [] {
    parse_agenda(R"({"format":"attentive-agenda/1","id":"x","topics":[
      {"id":"q1","question":"a?"},{"id":"q1","question":"b?"}]})");
  };
  CHECK(code_of(dup) == Errc::kValidationError);
  CHECK(message_of(dup).find("q1") != std::string::npos);
}

TEST_CASE("malformed json reports a position") {
  try {
    parse_agenda("{\n  \"format\": \"attentive-agenda/1\",\n  \"id\": \n}");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 4);
    CHECK(e.code() == Errc::kParseError);
  }
  CHECK(code_of([] { parse_agenda(R"({"format":"other/1","id":"x","topics":[]})"); }) ==
        Errc::kParseError);
  CHECK(code_of([] {
          parse_agenda(R"({"format":"attentive-agenda/1","id":"x","topics":[
            {"id":"q","question":"?","kind":"yes_no"}]})");
        }) == Errc::kParseError);
}

TEST_CASE("shipped agendas are valid and round-trip") {
  for (const auto& a : {testing::books_agenda(), testing::interview_agenda()}) {
    CHECK(validate_agenda(a, {}).empty());
    CHECK(parse_agenda(serialize_agenda(a)) == a);
  }
  const auto six = testing::interview_agenda();
  REQUIRE(six.topics.size() == 6);
  CHECK(six.topics[3].question_text == "What is the biggest challenge you face now?");
  int rated = 0;
  for (const auto& t : six.topics) rated += t.ask_rating;
  CHECK(rated == 4);
}

TEST_CASE("validation lists every violation") {
  auto a = testing::interview_agenda();
  a.topics[3].bundle_ref = "top-challenge";
  auto v = validate_agenda(a, {});
  REQUIRE(v.size() == 1);
  CHECK(v[0] == Violation{Violation::Kind::kDanglingBundle, "top-challenge"});

  const auto fp = testing::small_encoder()->fingerprint();
  auto bundle = testing::stub_bundle("q4", fp, testing::constant(fp, 0.9),
                                     {{"c1", testing::constant(fp, 0.1)},
                                      {"c3", testing::constant(fp, 0.1)},
                                      {"c9", testing::constant(fp, 0.1)}});
  bundle->id = "top-challenge";
  a.topics[3].templates.erase("c3");
  v = validate_agenda(a, {{"top-challenge", bundle}});
  CHECK(v == std::vector<Violation>{{Violation::Kind::kMissingTemplates, "c3"},
                                    {Violation::Kind::kMissingTemplates, "c9"}});

  auto b = testing::books_agenda();
  b.topics[0].default_templates.clear();
  b.topics[0].max_digressions = -1;
  b.global_fallbacks.clear();
  b.settings.threshold2 = 1.5;
  v = validate_agenda(b, {});
  CHECK(v.size() == 4);
}

TEST_CASE("order must increase") {
  auto a = testing::interview_agenda();
  a.topics[2].order = a.topics[1].order;
  const auto v = validate_agenda(a, {});
  REQUIRE(v.size() == 1);
  CHECK(v[0].kind == Violation::Kind::kOrderNotIncreasing);
  CHECK(v[0].subject == a.topics[2].id);
}

TEST_CASE("binding a bundle") {
  const auto a = testing::interview_agenda();
  const auto fp = testing::small_encoder()->fingerprint();
  auto bundle = testing::stub_bundle("q4", fp, testing::constant(fp, 0.9),
                                     {{"c1", testing::constant(fp, 0.1)}});
  bundle->id = "top-challenge";
  const auto bound = bind_bundle(a, "q4", bundle);
  CHECK(resolve_bundle(*bound.find_topic("q4"), {}) == bundle);
  CHECK(resolve_bundle(*bound.find_topic("q3"), {}) == nullptr);
  CHECK(validate_agenda(bound, {}).empty());

  CHECK(code_of([&] { bind_bundle(a, "q9", bundle); }) == Errc::kUnknownTopic);
  auto q2 = testing::stub_bundle("q2", fp, testing::constant(fp, 0.9), {});
  CHECK(code_of([&] { bind_bundle(a, "q4", q2); }) == Errc::kTopicMismatch);
}

TEST_CASE("technique names") {
  for (auto t : {Technique::kParaphrasing, Technique::kVerbalizingEmotions, Technique::kSummarizing,
                 Technique::kEncouraging}) {
    CHECK(parse_technique(technique_name(t)) == t);
  }
  CHECK_FALSE(parse_technique("mirroring"));
}
