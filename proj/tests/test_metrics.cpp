#include <doctest.h>

#include <cmath>

#include "attentive/error.hpp"
#include "attentive/metrics.hpp"
#include "attentive/random.hpp"
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

Turn turn(Speaker who, std::string text, std::int64_t at) {
  Turn t;
  t.speaker = who;
  t.text = std::move(text);
  t.at = at;
  return t;
}

Session finished_session() {
  Session s;
  s.id = "p7";
  s.agenda_id = "interview";
  s.transcript = {turn(Speaker::kBot, "Hello, tell me about yourself?", 0),
                  turn(Speaker::kUser, "I am a nurse", 60'000),
                  turn(Speaker::kBot, "Thanks for sharing.", 61'000),
                  turn(Speaker::kUser, "I like to hike on weekends", 300'000),
                  turn(Speaker::kBot, "Thank you!", 559'800)};
  s.ratings = {{"q1", 4}, {"q2", 5}};
  s.interest_rating = 3;
  return s;
}

}  // namespace

TEST_CASE("response quality index") {
  const std::vector<CodedResponse> all_good(4, CodedResponse{2, 2, 2});
  CHECK(rqi(all_good) == 32);
  const std::vector<CodedResponse> mixed{{2, 2, 2}, {1, 2, 2}, {0, 2, 2}, {1, 1, 1}, {2, 1, 1}, {1, 1, 1}};
  CHECK(rqi(mixed) == 8 + 4 + 0 + 1 + 2 + 1);
  const std::vector<CodedResponse> twelve{{2, 2, 2}, {2, 2, 1}};
  CHECK(rqi(twelve) == 12);
  CHECK(code_of([] { rqi({}); }) == Errc::kEmptyCoding);
  const std::vector<CodedResponse> bad{{3, 0, 0}};
  CHECK(code_of([&] { rqi(bad); }) == Errc::kScoreOutOfRange);

  // Any zero dimension zeroes the response; the total stays within [0, 8N].
  Rng rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<CodedResponse> coded;
    const auto n = 1 + uniform_index(rng, 10);
    int expected = 0;
    for (std::size_t i = 0; i < n; ++i) {
      CodedResponse c{static_cast<int>(uniform_index(rng, 3)), static_cast<int>(uniform_index(rng, 3)),
                      static_cast<int>(uniform_index(rng, 3))};
      expected += c.relevance * c.clarity * c.specificity;
      coded.push_back(c);
    }
    const int got = rqi(coded);
    CHECK(got == expected);
    CHECK(got >= 0);
    CHECK(got <= 8 * static_cast<int>(n));
  }
}

TEST_CASE("informativeness under a uniform model") {
  std::map<std::string, std::uint64_t, std::less<>> counts;
  for (int i = 0; i < 16; ++i) counts["w" + std::to_string(i)] = 5;
  const auto uniform = UnigramModel::from_counts(counts, UnigramModel::Smoothing::kNone);
  const std::vector<std::string> responses{"w1 w2 w3 w4 w5", "w6 w7 w8 w9 w10"};
  CHECK(informativeness(responses, uniform) == doctest::Approx(40.0));
  CHECK(uniform.unknown_probability() == 0.0);
}

TEST_CASE("add-one smoothing by hand") {
  // counts: the=3, cat=1; total 4, vocabulary 2, denominator 4+2+1 = 7.
  const std::vector<std::string> corpus{"the cat the", "the"};
  const auto m = UnigramModel::fit(corpus);
  CHECK(m.total() == 4);
  CHECK(m.vocabulary_size() == 2);
  CHECK(m.probability("the") == doctest::Approx(4.0 / 7.0));
  CHECK(m.probability("cat") == doctest::Approx(2.0 / 7.0));
  CHECK(m.probability("dog") == doctest::Approx(1.0 / 7.0));
  const double total = m.probability("the") + m.probability("cat") + m.unknown_probability();
  CHECK(total == doctest::Approx(1.0));
  const std::vector<std::string> said{"The dog"};
  CHECK(informativeness(said, m) == doctest::Approx(std::log2(7.0 / 4.0) + std::log2(7.0)));
  CHECK(informativeness(std::vector<std::string>{}, m) == 0.0);
}

TEST_CASE("length and duration use the right turns") {
  const auto s = finished_session();
  CHECK(response_length(s.transcript) == 4 + 6);
  CHECK(engagement_duration(s.transcript) == doctest::Approx(9.33));
  CHECK(user_texts(s.transcript) == std::vector<std::string>{"I am a nurse", "I like to hike on weekends"});
  const std::vector<Turn> three{turn(Speaker::kUser, "I read novels", 0)};
  CHECK(response_length(three) == 3);
  CHECK(engagement_duration(three) == 0.0);
  CHECK(code_of([] { response_length({}); }) == Errc::kEmptyTranscript);
  CHECK(code_of([] { engagement_duration({}); }) == Errc::kEmptyTranscript);
}

TEST_CASE("rating aggregation") {
  const std::vector<std::string> topics{"q1", "q2", "q3", "q4"};
  auto r = aggregate_ratings({{"q1", 5}, {"q2", 5}, {"q3", 5}, {"q4", 5}}, topics, 4, 2);
  CHECK(r.agent_comprehension == 20);
  CHECK(r.interest == 4);
  CHECK(r.chat == 2);
  r = aggregate_ratings({{"q1", 1}, {"q2", 1}, {"q3", 1}, {"q4", 1}, {"q5", 5}}, topics, {}, {});
  CHECK(r.agent_comprehension == 4);
  CHECK(aggregate_ratings({{"q1", 3}, {"q2", 4}, {"q3", 2}, {"q4", 4}}, topics, {}, {})
            .agent_comprehension == 13);
  try {
    aggregate_ratings({{"q1", 3}, {"q4", 3}}, topics, {}, {});
    FAIL("expected MissingRating");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kMissingRating);
    CHECK(std::string(e.what()).find("q2") != std::string::npos);
  }
  CHECK(code_of([&] { aggregate_ratings({{"q1", 6}, {"q2", 1}, {"q3", 1}, {"q4", 1}}, topics, {}, {}); }) ==
        Errc::kScoreOutOfRange);
  CHECK(code_of([&] { aggregate_ratings({}, {}, 0, {}); }) == Errc::kScoreOutOfRange);
}

TEST_CASE("coding sheets") {
  const std::string sheet = std::string(kCodingHeader) +
                            "\np1\t2\t1\t1\t1\np1\t1\t2\t2\t2\np2\t1\t0\t2\t2\n\n";
  const auto coded = parse_coding_sheet(sheet);
  REQUIRE(coded.size() == 2);
  CHECK(coded.at("p1") == std::vector<CodedResponse>{{2, 2, 2}, {1, 1, 1}});
  CHECK(rqi(coded.at("p1")) == 9);

  auto line_of = [](const std::string& s) -> std::pair<Errc, std::size_t> {
    try {
      parse_coding_sheet(s);
    } catch (const RowError& e) {
      return {e.code(), e.line()};
    }
    return {Errc::kIoError, 0};
  };
  const std::string h(kCodingHeader);
  CHECK(line_of(h + "\np1\t1\t2\t2\t2\np1\t2\t2\t2\t3\n") == std::pair{Errc::kScoreOutOfRange, std::size_t{3}});
  CHECK(line_of(h + "\np1\t1\t2\t2\n") == std::pair{Errc::kMalformedRow, std::size_t{2}});
  CHECK(line_of(h + "\np1\t1\t2\t2\t2\np1\t1\t2\t2\t2\n") == std::pair{Errc::kMalformedRow, std::size_t{3}});
  CHECK(line_of("wrong\n") == std::pair{Errc::kMalformedRow, std::size_t{1}});
}

TEST_CASE("participant report") {
  const auto s = finished_session();
  const std::vector<std::string> reference{"I am a person who likes to read"};
  const auto model = UnigramModel::fit(reference);
  const std::vector<std::string> rated{"q1", "q2"};
  const std::vector<CodedResponse> coded{{2, 2, 2}, {1, 2, 2}};
  const auto full = measure(s, model, rated, &coded);
  CHECK(full.rqi == 12);
  CHECK(full.agent_comprehension == 9);
  CHECK(full.response_words == 10);
  CHECK(full.informativeness_bits == doctest::Approx(informativeness(user_texts(s.transcript), model)));

  const std::vector<std::string> more{"q1", "q2", "q3"};
  const auto partial = measure(s, model, more, nullptr);
  CHECK_FALSE(partial.rqi);
  CHECK_FALSE(partial.agent_comprehension);

  const std::vector<ParticipantMetrics> rows{full, partial};
  const auto report = render_metrics_report(rows);
  const auto lines = text::split_lines(report);
  REQUIRE(lines.size() >= 3);
  CHECK(lines[0] ==
        "session\tagenda\tduration_min\tresponse_words\tinformativeness_bits\trqi\tagentC\tinterestR\tchatR");
  CHECK(lines[1].starts_with("p7\tinterview\t9.33\t10\t"));
  CHECK(lines[1].ends_with("\t12\t9\t3\tNA"));
  CHECK(lines[2].ends_with("\tNA\tNA\t3\tNA"));
}
