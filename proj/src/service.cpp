#include "attentive/service.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <random>

#include <httplib.h>

#include "attentive/error.hpp"
#include "attentive/text.hpp"

namespace attentive {

using nlohmann::json;

namespace {

constexpr std::string_view kSystem = "system";
constexpr std::string_view kBot = "bot";
constexpr std::string_view kUser = "user";

std::optional<std::uint64_t> parse_u64(std::string_view s) {
  if (s.empty()) return std::nullopt;
  std::uint64_t v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') return std::nullopt;
    v = v * 10 + static_cast<std::uint64_t>(c - '0');
  }
  return v;
}

std::optional<std::int64_t> parse_i64(std::string_view s) {
  const bool negative = !s.empty() && s.front() == '-';
  const auto v = parse_u64(negative ? s.substr(1) : s);
  if (!v) return std::nullopt;
  return negative ? -static_cast<std::int64_t>(*v) : static_cast<std::int64_t>(*v);
}

LogEvent turn_event(const Turn& t, std::uint64_t seq) {
  if (t.speaker == Speaker::kUser) {
    return {seq, t.at, std::string(kUser), std::string(turn_kind_name(*t.kind)), t.text};
  }
  return {seq, t.at, std::string(kBot), std::string(bot_act_name(*t.act)), t.text};
}

json interpretation_json(const Interpretation& in) {
  json probs = json::array();
  for (const auto& [intent, p] : in.intent_probs) probs.push_back({{"intent", intent}, {"prob", p}});
  json j{{"relevance_prob", in.relevance_prob},
         {"intent_probs", std::move(probs)},
         {"decision", decision_name(in.decision)}};
  j["best_intent"] = in.best_intent ? json(*in.best_intent) : json(nullptr);
  return j;
}

void apply_rating(Session& s, const json& body) {
  const int score = body.at("score").get<int>();
  if (body.contains("topic_id")) {
    s.ratings[body.at("topic_id").get<std::string>()] = score;
  } else if (body.at("final").get<std::string>() == "interest") {
    s.interest_rating = score;
  } else {
    s.chat_rating = score;
  }
}

}  // namespace

Clock system_clock_ms() {
  return [] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
  };
}

std::string format_log_event(const LogEvent& e) {
  return std::to_string(e.seq) + '\t' + std::to_string(e.ms) + '\t' + e.speaker + '\t' + e.kind +
         '\t' + text::escape_field(e.text);
}

LogEvent parse_log_event(std::string_view line) {
  const auto f = text::split_tabs(line);
  if (f.size() != 5) throw Error(Errc::kCorruptLog, "log line needs 5 fields");
  const auto seq = parse_u64(f[0]);
  const auto ms = parse_i64(f[1]);
  if (!seq || !ms) throw Error(Errc::kCorruptLog, "bad sequence number or timestamp");
  if (f[2] != kSystem && f[2] != kBot && f[2] != kUser) {
    throw Error(Errc::kCorruptLog, "unknown speaker '" + std::string(f[2]) + "'");
  }
  return {*seq, *ms, std::string(f[2]), std::string(f[3]), text::unescape_field(f[4])};
}

std::string new_session_id() {
  static thread_local std::random_device device;
  static constexpr char kHex[] = "0123456789abcdef";
  std::string id;
  id.reserve(32);
  for (int word = 0; word < 4; ++word) {
    std::uint32_t bits = device();
    for (int i = 0; i < 8; ++i) {
      id.push_back(kHex[bits & 0xF]);
      bits >>= 4;
    }
  }
  return id;
}

struct Service::Entry {
  std::mutex mutex;
  std::shared_ptr<const DialogEngine> engine;
  Session session;
  /// Log sequence number of each transcript turn.
  std::vector<std::uint64_t> turn_seq;
  std::string path;
  std::uint64_t next_seq = 0;
};

Service::Service(EngineMap engines, ServiceConfig config)
    : engines_(std::move(engines)), config_(std::move(config)) {
  if (!config_.clock) config_.clock = system_clock_ms();
  std::error_code ec;
  std::filesystem::create_directories(config_.log_dir, ec);
  if (ec) throw Error(Errc::kIoError, "cannot create " + config_.log_dir + ": " + ec.message());
}

Service::~Service() = default;

std::shared_ptr<Service::Entry> Service::find(std::string_view session_id) const {
  std::shared_lock lock(sessions_mutex_);
  const auto it = sessions_.find(session_id);
  if (it == sessions_.end()) {
    throw Error(Errc::kUnknownSession, "no session '" + std::string(session_id) + "'");
  }
  return it->second;
}

void Service::append(Entry& entry, std::vector<LogEvent> events) {
  std::string block;
  for (const auto& e : events) {
    block += format_log_event(e);
    block += '\n';
  }
  const int fd = ::open(entry.path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (fd < 0) throw Error(Errc::kIoError, "cannot open " + entry.path + ": " + std::strerror(errno));
  std::size_t written = 0;
  while (written < block.size()) {
    const auto n = ::write(fd, block.data() + written, block.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      const int err = errno;
      ::close(fd);
      throw Error(Errc::kIoError, "write to " + entry.path + " failed: " + std::strerror(err));
    }
    written += static_cast<std::size_t>(n);
  }
  if (config_.durable) ::fsync(fd);
  ::close(fd);
  entry.next_seq = events.back().seq + 1;
}

Service::Created Service::create_session(std::string_view agenda_id,
                                         std::optional<std::uint64_t> seed) {
  const auto engine_it = engines_.find(agenda_id);
  if (engine_it == engines_.end()) {
    throw Error(Errc::kUnknownAgenda, "no agenda '" + std::string(agenda_id) + "'");
  }
  if (!seed) {
    std::random_device device;
    seed = (static_cast<std::uint64_t>(device()) << 32) | device();
  }
  auto entry = std::make_shared<Entry>();
  entry->engine = engine_it->second;
  const std::string id = new_session_id();
  entry->path = (std::filesystem::path(config_.log_dir) / (id + ".log")).string();
  const std::int64_t at = config_.clock();
  entry->session = entry->engine->start_session(id, *seed, at);

  std::vector<LogEvent> events;
  const json start{{"session_id", id}, {"agenda_id", std::string(agenda_id)}, {"seed", *seed}};
  events.push_back({0, at, std::string(kSystem), "start", start.dump()});
  for (const auto& turn : entry->session.transcript) {
    events.push_back(turn_event(turn, events.size()));
    entry->turn_seq.push_back(events.back().seq);
  }
  append(*entry, events);

  Created out;
  out.session_id = id;
  for (const auto& turn : entry->session.transcript) out.messages.push_back(turn.text);
  out.topic_id = entry->engine->agenda().topics[entry->session.cursor].id;
  out.seq = entry->next_seq - 1;
  {
    std::unique_lock lock(sessions_mutex_);
    sessions_.emplace(id, std::move(entry));
  }
  return out;
}

Service::Posted Service::post_message(std::string_view session_id, std::string_view text_in) {
  auto entry = find(session_id);
  std::lock_guard lock(entry->mutex);
  if (entry->session.done) {
    throw Error(Errc::kSessionDone, "session '" + std::string(session_id) + "' is finished");
  }
  if (text::trim(text_in).empty()) throw Error(Errc::kEmptyMessage, "message is empty");

  Session next = entry->session;
  const std::int64_t at = std::max(config_.clock(), next.last_activity);
  const std::size_t before = next.transcript.size();
  const BotReply reply = entry->engine->handle_message(next, text_in, at);

  std::vector<LogEvent> events;
  std::vector<std::uint64_t> seqs;
  for (std::size_t i = before; i < next.transcript.size(); ++i) {
    events.push_back(turn_event(next.transcript[i], entry->next_seq + events.size()));
    seqs.push_back(events.back().seq);
  }
  append(*entry, events);
  entry->session = std::move(next);
  entry->turn_seq.insert(entry->turn_seq.end(), seqs.begin(), seqs.end());

  Posted out;
  out.session_id = std::string(session_id);
  out.messages = reply.messages;
  out.topic_id = reply.topic_id;
  out.done = reply.done;
  out.kind = reply.kind;
  out.rating_request = reply.rating_request;
  out.seq = entry->next_seq - 1;
  return out;
}

std::uint64_t Service::post_rating(std::string_view session_id, const RatingTarget& target,
                                   int score) {
  auto entry = find(session_id);
  std::lock_guard lock(entry->mutex);
  if (target.topic_id.has_value() == target.final.has_value()) {
    throw Error(Errc::kInvalidArgument, "rate exactly one of topic_id or final");
  }
  if (score < 1 || score > 5) {
    throw Error(Errc::kScoreOutOfRange, "score must be 1-5, got " + std::to_string(score));
  }
  Session& s = entry->session;
  json body{{"score", score}};
  bool overwrite = false;
  if (target.topic_id) {
    const auto& topics = entry->engine->agenda().topics;
    const auto it = std::find_if(topics.begin(), topics.end(),
                                 [&](const Topic& t) { return t.id == *target.topic_id; });
    if (it == topics.end()) throw Error(Errc::kUnknownTopic, "no topic '" + *target.topic_id + "'");
    if (static_cast<std::size_t>(it - topics.begin()) > s.cursor) {
      throw Error(Errc::kTopicNotYetAsked, "topic '" + *target.topic_id + "' has not been asked");
    }
    overwrite = s.ratings.contains(*target.topic_id);
    body["topic_id"] = *target.topic_id;
  } else {
    if (*target.final != "interest" && *target.final != "chat") {
      throw Error(Errc::kInvalidArgument, "final rating must be 'interest' or 'chat'");
    }
    if (!s.done) throw Error(Errc::kTopicNotYetAsked, "final ratings come after the last topic");
    overwrite = *target.final == "interest" ? s.interest_rating.has_value()
                                            : s.chat_rating.has_value();
    body["final"] = *target.final;
  }
  const std::int64_t at = std::max(config_.clock(), s.last_activity);
  append(*entry, {{entry->next_seq, at, std::string(kSystem), overwrite ? "rerating" : "rating",
                   body.dump()}});
  apply_rating(s, body);
  return entry->next_seq - 1;
}

json Service::transcript_json(std::string_view session_id) const {
  auto entry = find(session_id);
  std::lock_guard lock(entry->mutex);
  const Session& s = entry->session;
  const auto& topics = entry->engine->agenda().topics;
  json turns = json::array();
  for (std::size_t i = 0; i < s.transcript.size(); ++i) {
    const Turn& t = s.transcript[i];
    json j{{"seq", entry->turn_seq[i]},
           {"speaker", t.speaker == Speaker::kUser ? kUser : kBot},
           {"text", t.text},
           {"at", t.at},
           {"topic_id", t.topic_id}};
    if (t.kind) j["kind"] = turn_kind_name(*t.kind);
    if (t.act) j["act"] = bot_act_name(*t.act);
    if (t.source) j["source"] = response_source_name(*t.source);
    if (t.interpretation) j["interpretation"] = interpretation_json(*t.interpretation);
    turns.push_back(std::move(j));
  }
  json finals = json::object();
  finals["interest"] = s.interest_rating ? json(*s.interest_rating) : json(nullptr);
  finals["chat"] = s.chat_rating ? json(*s.chat_rating) : json(nullptr);
  json rated = json::array();
  for (const auto& t : topics) {
    if (t.ask_rating) rated.push_back(t.id);
  }
  return json{{"session_id", s.id},
              {"agenda_id", s.agenda_id},
              {"seed", s.seed},
              {"started_at", s.started_at},
              {"last_activity", s.last_activity},
              {"done", s.done},
              {"pending", s.pending},
              {"cursor", s.cursor},
              {"topic_id", s.done ? "" : topics[s.cursor].id},
              {"turns", std::move(turns)},
              {"answers", s.answers},
              {"ratings", s.ratings},
              {"rated_topics", std::move(rated)},
              {"final", std::move(finals)},
              {"seq", entry->next_seq - 1}};
}

Session Service::snapshot(std::string_view session_id) const {
  auto entry = find(session_id);
  std::lock_guard lock(entry->mutex);
  return entry->session;
}

std::vector<std::string> Service::session_ids() const {
  std::shared_lock lock(sessions_mutex_);
  std::vector<std::string> out;
  for (const auto& [id, entry] : sessions_) out.push_back(id);
  return out;
}

std::vector<std::string> Service::agenda_ids() const {
  std::vector<std::string> out;
  for (const auto& [id, engine] : engines_) out.push_back(id);
  return out;
}

std::shared_ptr<Service::Entry> Service::replay(const std::string& path) {
  const std::string buffer = text::read_file(path);
  struct Line {
    LogEvent event;
    std::size_t offset;
  };
  std::vector<Line> lines;
  std::size_t start = 0;
  while (start < buffer.size()) {
    const auto nl = buffer.find('\n', start);
    // A line without its newline is the tail of an interrupted write.
    if (nl == std::string::npos) break;
    try {
      lines.push_back({parse_log_event(std::string_view(buffer).substr(start, nl - start)), start});
    } catch (const Error& e) {
      throw Error(Errc::kCorruptLog, path + ": " + e.what());
    }
    start = nl + 1;
  }
  auto corrupt = [&](const std::string& why) { return Error(Errc::kCorruptLog, path + ": " + why); };
  auto truncate_to = [&](std::size_t offset) {
    std::filesystem::resize_file(path, offset);
  };

  if (lines.empty() || lines[0].event.speaker != kSystem || lines[0].event.kind != "start") {
    if (lines.empty()) {
      std::filesystem::remove(path);
      return nullptr;
    }
    throw corrupt("log does not begin with a start event");
  }
  const json start_info = json::parse(lines[0].event.text, nullptr, false);
  if (start_info.is_discarded()) throw corrupt("unreadable start event");
  const auto agenda_id = start_info.value("agenda_id", "");
  const auto engine_it = engines_.find(agenda_id);
  if (engine_it == engines_.end()) throw corrupt("unknown agenda '" + agenda_id + "'");

  auto entry = std::make_shared<Entry>();
  entry->engine = engine_it->second;
  entry->path = path;
  entry->session = entry->engine->start_session(start_info.value("session_id", ""),
                                                start_info.value("seed", std::uint64_t{0}),
                                                lines[0].event.ms);

  // Matches the turns a batch produced against the logged events from index
  // `first`. Returns false when the log ends inside the batch.
  auto match = [&](const Session& s, std::size_t from_turn, std::size_t first) {
    for (std::size_t t = from_turn, i = first; t < s.transcript.size(); ++t, ++i) {
      if (i >= lines.size()) return false;
      const LogEvent expected = turn_event(s.transcript[t], lines[i].event.seq);
      if (!(expected == lines[i].event)) {
        throw corrupt("event " + std::to_string(lines[i].event.seq) +
                      " does not match the replayed dialog");
      }
    }
    return true;
  };

  if (!match(entry->session, 0, 1)) {
    std::filesystem::remove(path);
    return nullptr;
  }
  for (std::size_t t = 0; t < entry->session.transcript.size(); ++t) {
    entry->turn_seq.push_back(lines[1 + t].event.seq);
  }
  std::size_t i = 1 + entry->session.transcript.size();
  entry->next_seq = lines[i - 1].event.seq + 1;

  while (i < lines.size()) {
    const LogEvent& e = lines[i].event;
    if (e.seq != entry->next_seq) throw corrupt("sequence gap at " + std::to_string(e.seq));
    if (e.speaker == kSystem && (e.kind == "rating" || e.kind == "rerating")) {
      const json body = json::parse(e.text, nullptr, false);
      if (body.is_discarded() || !body.contains("score")) throw corrupt("unreadable rating event");
      apply_rating(entry->session, body);
      entry->next_seq = e.seq + 1;
      ++i;
      continue;
    }
    if (e.speaker != kUser) throw corrupt("unexpected " + e.speaker + " event");
    Session next = entry->session;
    const std::size_t before = next.transcript.size();
    try {
      entry->engine->handle_message(next, e.text, e.ms);
    } catch (const Error& err) {
      throw corrupt(std::string("replay failed: ") + err.what());
    }
    if (!match(next, before, i)) {
      truncate_to(lines[i].offset);
      break;
    }
    for (std::size_t t = before; t < next.transcript.size(); ++t) {
      entry->turn_seq.push_back(lines[i + (t - before)].event.seq);
    }
    i += next.transcript.size() - before;
    entry->next_seq = lines[i - 1].event.seq + 1;
    entry->session = std::move(next);
  }
  if (i == lines.size() && start < buffer.size()) truncate_to(start);
  return entry;
}

std::size_t Service::recover() {
  std::vector<std::string> paths;
  for (const auto& f : std::filesystem::directory_iterator(config_.log_dir)) {
    if (f.is_regular_file() && f.path().extension() == ".log") paths.push_back(f.path().string());
  }
  std::sort(paths.begin(), paths.end());
  std::size_t restored = 0;
  for (const auto& p : paths) {
    auto entry = replay(p);
    if (!entry) continue;
    std::unique_lock lock(sessions_mutex_);
    sessions_[entry->session.id] = std::move(entry);
    ++restored;
  }
  return restored;
}

Session session_from_transcript_json(const json& j) {
  Session s;
  try {
    s.id = j.at("session_id").get<std::string>();
    s.agenda_id = j.at("agenda_id").get<std::string>();
    s.seed = j.value("seed", std::uint64_t{0});
    s.done = j.value("done", false);
    s.started_at = j.value("started_at", std::int64_t{0});
    s.last_activity = j.value("last_activity", std::int64_t{0});
    for (const auto& tj : j.at("turns")) {
      Turn t;
      t.speaker = tj.at("speaker").get<std::string>() == kUser ? Speaker::kUser : Speaker::kBot;
      t.text = tj.at("text").get<std::string>();
      t.at = tj.at("at").get<std::int64_t>();
      t.topic_id = tj.value("topic_id", "");
      if (tj.contains("kind")) t.kind = parse_turn_kind(tj.at("kind").get<std::string>());
      if (tj.contains("act")) t.act = parse_bot_act(tj.at("act").get<std::string>());
      s.transcript.push_back(std::move(t));
    }
    if (j.contains("ratings")) s.ratings = j.at("ratings").get<std::map<std::string, int>>();
    if (j.contains("answers")) {
      s.answers = j.at("answers").get<std::map<std::string, std::string>>();
    }
    if (j.contains("final")) {
      const auto& f = j.at("final");
      if (f.contains("interest") && !f.at("interest").is_null()) s.interest_rating = f.at("interest").get<int>();
      if (f.contains("chat") && !f.at("chat").is_null()) s.chat_rating = f.at("chat").get<int>();
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("transcript: ") + e.what(), 0, 0);
  }
  return s;
}

namespace {

int http_status(Errc code) {
  switch (code) {
    case Errc::kUnknownAgenda:
    case Errc::kUnknownSession:
    case Errc::kUnknownTopic:
      return 404;
    case Errc::kSessionDone:
    case Errc::kTopicNotYetAsked:
      return 409;
    case Errc::kEmptyMessage:
    case Errc::kScoreOutOfRange:
    case Errc::kParseError:
    case Errc::kInvalidArgument:
    case Errc::kValidationError:
      return 400;
    default:
      return 500;
  }
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, Errc code, const std::string& message) {
  send_json(res, http_status(code), json{{"error_code", errc_name(code)}, {"message", message}});
}

json parse_body(const httplib::Request& req) {
  json body = json::parse(req.body, nullptr, false);
  if (body.is_discarded() || !body.is_object()) {
    throw Error(Errc::kParseError, "request body must be a JSON object");
  }
  return body;
}

template <typename Handler>
auto guarded(Handler handler) {
  return [handler](const httplib::Request& req, httplib::Response& res) {
    try {
      handler(req, res);
    } catch (const Error& e) {
      send_error(res, e.code(), e.what());
    } catch (const json::exception& e) {
      send_error(res, Errc::kParseError, e.what());
    } catch (const std::exception& e) {
      send_json(res, 500, json{{"error_code", "InternalError"}, {"message", e.what()}});
    }
  };
}

}  // namespace

HttpServer::HttpServer(Service& service)
    : service_(service), server_(std::make_unique<httplib::Server>()) {
  auto& s = *server_;
  s.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                         {"Access-Control-Allow-Headers", "Content-Type"},
                         {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  s.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  s.Get("/api/agendas", guarded([this](const httplib::Request&, httplib::Response& res) {
          send_json(res, 200, json{{"agendas", service_.agenda_ids()}});
        }));

  s.Post("/api/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
           const json body = parse_body(req);
           std::optional<std::uint64_t> seed;
           if (body.contains("seed")) seed = body.at("seed").get<std::uint64_t>();
           const auto created = service_.create_session(body.at("agenda_id").get<std::string>(), seed);
           send_json(res, 201,
                     json{{"session_id", created.session_id},
                          {"bot_messages", created.messages},
                          {"topic_id", created.topic_id},
                          {"done", false},
                          {"seq", created.seq}});
         }));

  s.Post(R"(/api/sessions/([0-9a-f]+)/messages)",
         guarded([this](const httplib::Request& req, httplib::Response& res) {
           const json body = parse_body(req);
           const auto posted =
               service_.post_message(req.matches[1].str(), body.at("text").get<std::string>());
           json out{{"session_id", posted.session_id},
                    {"bot_messages", posted.messages},
                    {"topic_id", posted.topic_id},
                    {"done", posted.done},
                    {"kind", turn_kind_name(posted.kind)},
                    {"seq", posted.seq}};
           out["rating_request"] =
               posted.rating_request ? json(*posted.rating_request) : json(nullptr);
           send_json(res, 200, out);
         }));

  s.Post(R"(/api/sessions/([0-9a-f]+)/ratings)",
         guarded([this](const httplib::Request& req, httplib::Response& res) {
           const json body = parse_body(req);
           RatingTarget target;
           if (body.contains("topic_id")) target.topic_id = body.at("topic_id").get<std::string>();
           if (body.contains("final")) target.final = body.at("final").get<std::string>();
           const auto& score = body.at("score");
           if (!score.is_number_integer()) {
             throw Error(Errc::kScoreOutOfRange, "score must be an integer 1-5");
           }
           const auto seq = service_.post_rating(req.matches[1].str(), target, score.get<int>());
           send_json(res, 200, json{{"session_id", req.matches[1].str()}, {"ok", true}, {"seq", seq}});
         }));

  s.Get(R"(/api/sessions/([0-9a-f]+)/transcript)",
        guarded([this](const httplib::Request& req, httplib::Response& res) {
          send_json(res, 200, service_.transcript_json(req.matches[1].str()));
        }));
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) return server_->bind_to_any_port(host);
  return server_->bind_to_port(host, port) ? port : -1;
}

void HttpServer::run() { server_->listen_after_bind(); }

void HttpServer::stop() {
  if (server_) server_->stop();
}

}  // namespace attentive
