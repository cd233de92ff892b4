#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "attentive/dialog.hpp"

namespace httplib {
class Server;
}

namespace attentive {

/// Milliseconds since the epoch.
using Clock = std::function<std::int64_t()>;
Clock system_clock_ms();

/// One line of a session log: "seq\tms\tspeaker\tkind\tescaped-text".
struct LogEvent {
  std::uint64_t seq = 0;
  std::int64_t ms = 0;
  /// "system", "bot" or "user".
  std::string speaker;
  /// Turn kind for user rows, bot act for bot rows, event name for system rows.
  std::string kind;
  std::string text;

  bool operator==(const LogEvent&) const = default;
};

std::string format_log_event(const LogEvent& e);
/// Throws Error(kCorruptLog) on a malformed line.
LogEvent parse_log_event(std::string_view line);

/// 128-bit random token as 32 lowercase hex digits.
std::string new_session_id();

struct RatingTarget {
  std::optional<std::string> topic_id;
  /// "interest" or "chat".
  std::optional<std::string> final;
};

struct ServiceConfig {
  std::string log_dir;
  Clock clock = system_clock_ms();
  /// fsync after every append.
  bool durable = false;
};

class Service {
 public:
  using EngineMap = std::map<std::string, std::shared_ptr<const DialogEngine>, std::less<>>;

  Service(EngineMap engines, ServiceConfig config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  struct Created {
    std::string session_id;
    std::vector<std::string> messages;
    std::string topic_id;
    std::uint64_t seq = 0;
  };
  struct Posted {
    std::string session_id;
    std::vector<std::string> messages;
    std::string topic_id;
    bool done = false;
    TurnKind kind = TurnKind::kAnswer;
    std::optional<std::string> rating_request;
    std::uint64_t seq = 0;
  };

  /// Throws Error(kUnknownAgenda). The seed is random unless given.
  Created create_session(std::string_view agenda_id, std::optional<std::uint64_t> seed = {});
  /// Throws Error(kUnknownSession), Error(kSessionDone), Error(kEmptyMessage).
  Posted post_message(std::string_view session_id, std::string_view text);
  /// Throws Error(kUnknownSession), Error(kScoreOutOfRange),
  /// Error(kTopicNotYetAsked), Error(kUnknownTopic), Error(kInvalidArgument).
  std::uint64_t post_rating(std::string_view session_id, const RatingTarget& target, int score);

  nlohmann::json transcript_json(std::string_view session_id) const;
  /// Copy of the live session state.
  Session snapshot(std::string_view session_id) const;
  std::vector<std::string> session_ids() const;
  std::vector<std::string> agenda_ids() const;

  /// Rebuilds every session found in the log directory by replaying its log
  /// through the engine. A batch cut short by a crash is rolled back and
  /// trimmed from the file. Returns the number of sessions restored.
  std::size_t recover();

 private:
  struct Entry;
  std::shared_ptr<Entry> find(std::string_view session_id) const;
  void append(Entry& entry, std::vector<LogEvent> events);
  std::shared_ptr<Entry> replay(const std::string& path);

  EngineMap engines_;
  ServiceConfig config_;
  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Entry>, std::less<>> sessions_;
};

/// Session rebuilt from transcript JSON (as served by the transcript
/// endpoint), with enough state for the metrics functions.
Session session_from_transcript_json(const nlohmann::json& j);

/// JSON HTTP front end for a Service.
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds; port 0 picks a free port. Returns the bound port, or -1.
  int bind(const std::string& host, int port);
  /// Serves until stop(). Call after bind().
  void run();
  void stop();

 private:
  Service& service_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace attentive
