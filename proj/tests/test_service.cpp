#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "attentive/error.hpp"
#include "attentive/metrics.hpp"
#include "attentive/service.hpp"
#include "attentive/text.hpp"
#include "support.hpp"

using namespace attentive;
using nlohmann::json;

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

Service::EngineMap engines() {
  static const auto map = [] {
    Service::EngineMap m;
    for (auto agenda : {testing::books_agenda(), testing::interview_agenda()}) {
      const auto id = agenda.id;
      m.emplace(id, std::make_shared<const DialogEngine>(std::move(agenda), BundleRegistry{},
                                                         testing::side_talk()));
    }
    return m;
  }();
  return map;
}

ServiceConfig config_for(const testing::TempDir& dir) {
  ServiceConfig c;
  c.log_dir = dir.path().string();
  auto tick = std::make_shared<std::atomic<std::int64_t>>(1'700'000'000'000);
  c.clock = [tick] { return tick->fetch_add(1500); };
  return c;
}

const std::vector<std::string> kAnswers{
    "I am a graduate student in chemistry", "What was your question?",
    "I like cooking and long walks by the river", "I don't know",
    "I am patient and I listen well", "Finding a job after I graduate",
    "asdkjh qweqw zzzk", "Travel more and learn to paint", "Nothing else, thanks"};

// Drives a session to the end with a fixed script, rating what is asked.
void finish(Service& service, const std::string& id) {
  std::size_t k = 0;
  while (true) {
    const auto posted = service.post_message(id, kAnswers[k++ % kAnswers.size()]);
    if (posted.rating_request) service.post_rating(id, {posted.rating_request, {}}, 4);
    if (posted.done) break;
  }
  service.post_rating(id, {{}, "interest"}, 5);
  service.post_rating(id, {{}, "chat"}, 3);
}

std::string log_path(const testing::TempDir& dir, const std::string& id) {
  return dir.file(id + ".log");
}

}  // namespace

TEST_CASE("log lines round-trip") {
  const LogEvent e{7, 1234, "user", "ANSWER", "tab\there, newline\nthere \\ done"};
  const auto line = format_log_event(e);
  CHECK(line.find('\n') == std::string::npos);
  CHECK(parse_log_event(line) == e);
  CHECK(code_of([] { parse_log_event("1\t2\tuser"); }) == Errc::kCorruptLog);
  CHECK(code_of([] { parse_log_event("x\t2\tuser\tANSWER\thi"); }) == Errc::kCorruptLog);
  const auto id = new_session_id();
  CHECK(id.size() == 32);
  CHECK(id.find_first_not_of("0123456789abcdef") == std::string::npos);
  CHECK(id != new_session_id());
}

TEST_CASE("session lifecycle and error codes") {
  testing::TempDir dir;
  Service service(engines(), config_for(dir));
  CHECK(service.agenda_ids() == std::vector<std::string>{"books", "interview6"});
  CHECK(code_of([&] { service.create_session("nope"); }) == Errc::kUnknownAgenda);
  CHECK(code_of([&] { service.post_message("feed", "hi"); }) == Errc::kUnknownSession);

  const auto created = service.create_session("interview6", 42);
  CHECK(created.topic_id == "q1");
  REQUIRE(created.messages.size() == 1);
  CHECK(created.seq == 1);
  CHECK(std::filesystem::exists(log_path(dir, created.session_id)));
  const auto& id = created.session_id;

  CHECK(code_of([&] { service.post_message(id, "  "); }) == Errc::kEmptyMessage);
  CHECK(code_of([&] { service.post_rating(id, {"q2", {}}, 3); }) == Errc::kTopicNotYetAsked);
  CHECK(code_of([&] { service.post_rating(id, {"q9", {}}, 3); }) == Errc::kUnknownTopic);
  CHECK(code_of([&] { service.post_rating(id, {"q1", {}}, 6); }) == Errc::kScoreOutOfRange);
  CHECK(code_of([&] { service.post_rating(id, {{}, {}}, 3); }) == Errc::kInvalidArgument);
  CHECK(code_of([&] { service.post_rating(id, {{}, "interest"}, 3); }) == Errc::kTopicNotYetAsked);

  const auto posted = service.post_message(id, "I am a graduate student in chemistry");
  CHECK(posted.topic_id == "q2");
  CHECK(posted.rating_request == "q1");
  CHECK(posted.seq == 4);
  CHECK(service.post_rating(id, {"q1", {}}, 4) == 5);
  CHECK(service.post_rating(id, {"q1", {}}, 5) == 6);
  CHECK(service.snapshot(id).ratings.at("q1") == 5);

  finish(service, id);
  CHECK(code_of([&] { service.post_message(id, "more"); }) == Errc::kSessionDone);
  const auto s = service.snapshot(id);
  CHECK(s.done);
  CHECK(s.interest_rating == 5);
  CHECK(s.chat_rating == 3);

  const auto log = text::read_file(log_path(dir, id));
  const auto lines = text::split_lines(log);
  CHECK(lines[0].starts_with("0\t"));
  CHECK(parse_log_event(lines[0]).kind == "start");
  bool rerating = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto e = parse_log_event(lines[i]);
    CHECK(e.seq == i);
    rerating |= e.kind == "rerating";
  }
  CHECK(rerating);
}

TEST_CASE("transcripts feed the metrics") {
  testing::TempDir dir;
  Service service(engines(), config_for(dir));
  const auto id = service.create_session("interview6", 3).session_id;
  finish(service, id);
  const auto j = service.transcript_json(id);
  CHECK(j.at("done") == true);
  CHECK(j.at("rated_topics").size() == 4);
  CHECK(j.at("final").at("interest") == 5);
  for (const auto& t : j.at("turns")) CHECK((t.contains("kind") != t.contains("act")));

  const auto back = session_from_transcript_json(j);
  const auto live = service.snapshot(id);
  REQUIRE(back.transcript.size() == live.transcript.size());
  for (std::size_t i = 0; i < live.transcript.size(); ++i) {
    CHECK(back.transcript[i].text == live.transcript[i].text);
    CHECK(back.transcript[i].at == live.transcript[i].at);
  }
  CHECK(back.ratings == live.ratings);
  const auto model = UnigramModel::fit(std::vector<std::string>{"a b c"});
  const auto rated = j.at("rated_topics").get<std::vector<std::string>>();
  const auto m = measure(back, model, rated, nullptr);
  CHECK(m.agent_comprehension == 16);
  CHECK(m.response_words == response_length(live.transcript));
}

TEST_CASE("recovery rebuilds identical sessions") {
  testing::TempDir dir;
  std::vector<std::string> ids;
  std::map<std::string, Session> before;
  {
    Service service(engines(), config_for(dir));
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
      const auto id = service.create_session(seed % 2 ? "books" : "interview6", seed).session_id;
      ids.push_back(id);
      for (std::uint64_t k = 0; k < seed; ++k) {
        const auto p = service.post_message(id, kAnswers[k]);
        if (p.rating_request) service.post_rating(id, {p.rating_request, {}}, 2);
        if (p.done) break;
      }
      before[id] = service.snapshot(id);
    }
  }
  Service restored(engines(), config_for(dir));
  CHECK(restored.recover() == ids.size());
  for (const auto& id : ids) {
    CAPTURE(id);
    CHECK(restored.snapshot(id) == before.at(id));
  }
  // A restored session keeps going and logs with contiguous sequence numbers.
  const auto& live = ids[4];
  const auto p = restored.post_message(live, "I like cooking and long walks by the river");
  const auto log = text::read_file(log_path(dir, live));
  CHECK(p.seq + 1 == static_cast<std::size_t>(std::count(log.begin(), log.end(), '\n')));
}

TEST_CASE("an interrupted batch is rolled back") {
  testing::TempDir dir;
  std::string id;
  Session after_first;
  {
    Service service(engines(), config_for(dir));
    id = service.create_session("interview6", 9).session_id;
    service.post_message(id, "I am a graduate student in chemistry");
    after_first = service.snapshot(id);
    service.post_message(id, "I like cooking and long walks by the river");
  }
  const auto path = log_path(dir, id);
  const auto full = text::read_file(path);
  auto lines = text::split_lines(full);
  while (!lines.empty() && lines.back().empty()) lines.pop_back();

  SUBCASE("user row without its bot rows") {
    // Keep the user turn of the second batch, drop what the bot said.
    std::string cut;
    std::size_t user_rows = 0;
    for (auto l : lines) {
      cut += std::string(l) + "\n";
      if (parse_log_event(l).speaker == "user" && ++user_rows == 2) break;
    }
    text::write_file(path, cut);
  }
  SUBCASE("half-written final line") {
    // The last bot row of the second batch stops mid-line.
    text::write_file(path, full.substr(0, full.size() - 7));
  }
  Service restored(engines(), config_for(dir));
  CHECK(restored.recover() == 1);
  CHECK(restored.snapshot(id) == after_first);
  const auto trimmed = text::read_file(path);
  CHECK(trimmed.ends_with('\n'));
  CHECK(full.starts_with(trimmed));
  // The retried message lands where the lost batch was.
  restored.post_message(id, "I like cooking and long walks by the river");
  CHECK(text::read_file(path).size() > trimmed.size());
}

TEST_CASE("logs that disagree with the engine are rejected") {
  testing::TempDir dir;
  std::string id;
  {
    Service service(engines(), config_for(dir));
    id = service.create_session("interview6", 9).session_id;
    service.post_message(id, "I am a graduate student in chemistry");
  }
  const auto path = log_path(dir, id);
  auto log = text::read_file(path);
  SUBCASE("edited bot text") {
    const auto lines = text::split_lines(log);
    const auto e = parse_log_event(lines.at(3));
    REQUIRE(e.speaker == "bot");
    auto forged = e;
    forged.text = "Something the bot never said.";
    log.replace(log.find(lines[3]), lines[3].size(), format_log_event(forged));
  }
  SUBCASE("garbage line") { log += "not a log line\n"; }
  SUBCASE("missing start") { log = log.substr(log.find('\n') + 1); }
  text::write_file(path, log);
  Service restored(engines(), config_for(dir));
  CHECK(code_of([&] { restored.recover(); }) == Errc::kCorruptLog);
}

TEST_CASE("http api") {
  testing::TempDir dir;
  Service service(engines(), config_for(dir));
  HttpServer server(service);
  const int port = server.bind("127.0.0.1", 0);
  REQUIRE(port > 0);
  std::thread runner([&] { server.run(); });
  httplib::Client client("127.0.0.1", port);
  client.set_connection_timeout(5);

  auto post = [&](const std::string& path, const json& body) {
    auto res = client.Post(path, body.dump(), "application/json");
    REQUIRE(res);
    return std::pair{res->status, json::parse(res->body)};
  };

  auto agendas = client.Get("/api/agendas");
  REQUIRE(agendas);
  CHECK(agendas->status == 200);
  CHECK(json::parse(agendas->body).at("agendas").size() == 2);
  CHECK(agendas->get_header_value("Access-Control-Allow-Origin") == "*");

  auto [status, created] = post("/api/sessions", {{"agenda_id", "books"}, {"seed", 7}});
  CHECK(status == 201);
  const auto id = created.at("session_id").get<std::string>();
  CHECK(created.at("bot_messages").at(0).get<std::string>().ends_with(
      "What types of books do you like to read?"));
  CHECK(created.at("topic_id") == "books");

  const auto base = "/api/sessions/" + id;
  auto [s1, r1] = post(base + "/messages", {{"text", "What was your question?"}});
  CHECK(s1 == 200);
  CHECK(r1.at("kind") == "REPEAT_REQUEST");
  CHECK(r1.at("bot_messages") == json::array({"I was asking: What types of books do you like to read?"}));
  CHECK(r1.at("rating_request").is_null());

  auto [s2, r2] = post(base + "/messages", {{"text", ""}});
  CHECK(s2 == 400);
  CHECK(r2.at("error_code") == "EmptyMessage");
  auto [s3, r3] = post("/api/sessions/abc123/messages", {{"text", "hi"}});
  CHECK(s3 == 404);
  CHECK(r3.at("error_code") == "UnknownSession");
  auto [s4, r4] = post("/api/sessions", {{"agenda_id", "cooking"}});
  CHECK(s4 == 404);
  CHECK(r4.at("error_code") == "UnknownAgenda");
  auto bad = client.Post("/api/sessions", "{not json", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  CHECK(json::parse(bad->body).at("error_code") == "ParseError");
  auto [s5, r5] = post(base + "/ratings", {{"final", "chat"}, {"score", 4}});
  CHECK(s5 == 409);
  CHECK(r5.at("error_code") == "TopicNotYetAsked");
  auto [s6, r6] = post(base + "/ratings", {{"topic_id", "books"}, {"score", 2.5}});
  CHECK(s6 == 400);
  CHECK(r6.at("error_code") == "ScoreOutOfRange");

  auto [s7, r7] = post(base + "/messages", {{"text", "Mostly fantasy and some history books"}});
  CHECK(s7 == 200);
  CHECK(r7.at("done") == true);
  auto [s8, r8] = post(base + "/messages", {{"text", "hello?"}});
  CHECK(s8 == 409);
  CHECK(r8.at("error_code") == "SessionDone");
  auto [s9, r9] = post(base + "/ratings", {{"final", "interest"}, {"score", 5}});
  CHECK(s9 == 200);
  CHECK(r9.at("ok") == true);

  auto transcript = client.Get(base + "/transcript");
  REQUIRE(transcript);
  CHECK(transcript->status == 200);
  const auto tj = json::parse(transcript->body);
  CHECK(tj.at("turns").size() == 6);
  CHECK(tj.at("final").at("interest") == 5);

  auto options = client.Options(base + "/messages");
  REQUIRE(options);
  CHECK(options->status == 204);
  CHECK(options->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);

  server.stop();
  runner.join();
}

TEST_CASE("concurrent sessions stay isolated") {
  testing::TempDir dir;
  Service service(engines(), config_for(dir));
  constexpr int kThreads = 8;
  constexpr int kPerThread = 6;
  std::vector<std::vector<std::string>> ids(kThreads);
  std::atomic<int> failures{0};
  std::vector<std::thread> workers;
  for (int t = 0; t < kThreads; ++t) {
    workers.emplace_back([&, t] {
      try {
        for (int k = 0; k < kPerThread; ++k) {
          const auto id = service.create_session("interview6", static_cast<std::uint64_t>(t * 100 + k)).session_id;
          ids[t].push_back(id);
          finish(service, id);
        }
      } catch (...) {
        ++failures;
      }
    });
  }
  for (auto& w : workers) w.join();
  CHECK(failures == 0);
  CHECK(service.session_ids().size() == kThreads * kPerThread);

  // Each session matches a single-threaded run with the same seed.
  testing::TempDir solo_dir;
  Service solo(engines(), config_for(solo_dir));
  for (int t = 0; t < kThreads; ++t) {
    for (int k = 0; k < kPerThread; ++k) {
      const auto reference = solo.create_session("interview6", static_cast<std::uint64_t>(t * 100 + k)).session_id;
      finish(solo, reference);
      const auto a = solo.snapshot(reference);
      const auto b = service.snapshot(ids[t][k]);
      REQUIRE(a.transcript.size() == b.transcript.size());
      for (std::size_t i = 0; i < a.transcript.size(); ++i) CHECK(a.transcript[i].text == b.transcript[i].text);
    }
  }
  Service restored(engines(), config_for(dir));
  CHECK(restored.recover() == kThreads * kPerThread);
}
