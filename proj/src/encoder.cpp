#include "attentive/encoder.hpp"

#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <bit>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <set>

#include <httplib.h>
#include <json.hpp>

#include "attentive/error.hpp"
#include "attentive/text.hpp"

namespace attentive {

using nlohmann::json;

namespace {

constexpr std::string_view kFormat = "attentive-encoder/1";
// Second hash stream for the feature sign.
constexpr std::uint64_t kSignSalt = 0xA5A5A5A5DEADBEEFULL;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(Errc::kDimensionMismatch, "dot of vectors with sizes " +
                                              std::to_string(a.size()) + " and " +
                                              std::to_string(b.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

void l2_normalize(std::vector<double>& v) {
  const double n = l2_norm(v);
  if (n == 0.0) return;
  for (auto& x : v) x /= n;
}

std::vector<std::string> EncoderModel::features(std::string_view text) {
  auto tokens = text::words(text);
  std::vector<std::string> out = tokens;
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    out.push_back(tokens[i - 1] + " " + tokens[i]);
  }
  return out;
}

EncoderModel EncoderModel::fit(std::span<const std::string> corpus, std::size_t dimension,
                               std::uint64_t hash_seed) {
  if (corpus.empty()) throw Error(Errc::kEmptyCorpus, "encoder corpus is empty");
  if (dimension < kMinDimension) {
    throw Error(Errc::kInvalidArgument,
                "encoder dimension must be at least " + std::to_string(kMinDimension));
  }
  std::map<std::string, std::size_t> df;
  for (const auto& doc : corpus) {
    auto feats = features(doc);
    std::set<std::string> unique(feats.begin(), feats.end());
    for (const auto& f : unique) ++df[f];
  }
  EncoderModel model;
  model.dimension_ = dimension;
  model.hash_seed_ = hash_seed;
  model.document_count_ = corpus.size();
  const double n = static_cast<double>(corpus.size());
  for (const auto& [token, count] : df) {
    model.idf_[token] = std::log((1.0 + n) / (1.0 + static_cast<double>(count))) + 1.0;
  }
  model.fingerprint_ = model.compute_fingerprint();
  return model;
}

EncoderModel EncoderModel::external(std::string name, std::size_t dimension) {
  if (dimension < kMinDimension) {
    throw Error(Errc::kInvalidArgument,
                "encoder dimension must be at least " + std::to_string(kMinDimension));
  }
  EncoderModel model;
  model.kind_ = EncoderKind::kExternal;
  model.external_name_ = std::move(name);
  model.dimension_ = dimension;
  model.fingerprint_ = model.compute_fingerprint();
  return model;
}

double EncoderModel::idf(const std::string& token) const {
  if (auto it = idf_.find(token); it != idf_.end()) return it->second;
  return std::log(1.0 + static_cast<double>(document_count_)) + 1.0;
}

Embedding EncoderModel::encode(std::string_view text) const {
  if (kind_ != EncoderKind::kBaseline) {
    throw Error(Errc::kInvalidArgument,
                "external encoder '" + external_name_ + "' needs encode_external");
  }
  Embedding out{std::vector<double>(dimension_, 0.0), fingerprint_};
  std::map<std::string, int> counts;
  for (auto& f : features(text)) ++counts[f];
  for (const auto& [token, count] : counts) {
    const std::uint64_t index = text::fnv1a64(token, hash_seed_) % dimension_;
    const bool negative = (text::fnv1a64(token, hash_seed_ ^ kSignSalt) & 1U) != 0;
    const double weight = static_cast<double>(count) * idf(token);
    out.values[index] += negative ? -weight : weight;
  }
  l2_normalize(out.values);
  return out;
}

std::string EncoderModel::compute_fingerprint() const {
  std::string canonical;
  if (kind_ == EncoderKind::kExternal) {
    canonical = "external|" + external_name_ + "|" + std::to_string(dimension_);
  } else {
    canonical = "baseline|" + std::to_string(dimension_) + "|" + std::to_string(hash_seed_) +
                "|" + std::to_string(document_count_);
    for (const auto& [token, weight] : idf_) {
      canonical += "|" + token + "=" + hex64(std::bit_cast<std::uint64_t>(weight));
    }
  }
  return hex64(text::fnv1a64(canonical)) + hex64(text::fnv1a64(canonical, 0x51));
}

std::string EncoderModel::to_json() const {
  json j;
  j["format"] = kFormat;
  j["kind"] = kind_ == EncoderKind::kBaseline ? "baseline" : "external";
  j["dimension"] = dimension_;
  j["fingerprint"] = fingerprint_;
  if (kind_ == EncoderKind::kExternal) {
    j["name"] = external_name_;
  } else {
    j["hash_seed"] = hash_seed_;
    j["document_count"] = document_count_;
    j["idf"] = idf_;
  }
  return j.dump(1);
}

EncoderModel EncoderModel::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("encoder model: ") + e.what(), 0, 0);
  }
  if (j.value("format", "") != kFormat) {
    throw Error(Errc::kVersionMismatch, "encoder model format is not " + std::string(kFormat));
  }
  EncoderModel model;
  try {
    model.dimension_ = j.at("dimension").get<std::size_t>();
    if (j.at("kind").get<std::string>() == "external") {
      model.kind_ = EncoderKind::kExternal;
      model.external_name_ = j.at("name").get<std::string>();
    } else {
      model.hash_seed_ = j.at("hash_seed").get<std::uint64_t>();
      model.document_count_ = j.at("document_count").get<std::size_t>();
      model.idf_ = j.at("idf").get<std::map<std::string, double>>();
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("encoder model: ") + e.what(), 0, 0);
  }
  model.fingerprint_ = model.compute_fingerprint();
  if (model.fingerprint_ != j.value("fingerprint", "")) {
    throw Error(Errc::kFingerprintMismatch,
                "encoder model contents do not match its recorded fingerprint");
  }
  return model;
}

EncoderModel EncoderModel::load(const std::string& path) {
  return from_json(text::read_file(path));
}

namespace embed_protocol {

std::string format_request(std::string_view text) {
  return "EMBED\t" + text::escape_field(text);
}

std::vector<double> parse_response(std::string_view line) {
  const auto fields = text::split_tabs(line);
  if (fields.size() != 2) {
    throw Error(Errc::kAdapterUnreachable, "malformed adapter response line");
  }
  std::size_t declared = 0;
  try {
    declared = std::stoul(std::string(fields[0]));
  } catch (const std::exception&) {
    throw Error(Errc::kAdapterUnreachable, "adapter response has no dimension");
  }
  std::vector<double> values;
  values.reserve(declared);
  std::string_view rest = fields[1];
  while (!rest.empty()) {
    auto comma = rest.find(',');
    auto item = rest.substr(0, comma);
    try {
      std::size_t used = 0;
      values.push_back(std::stod(std::string(item), &used));
    } catch (const std::exception&) {
      throw Error(Errc::kAdapterUnreachable, "adapter response has a non-numeric value");
    }
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  if (values.size() != declared) {
    throw Error(Errc::kAdapterUnreachable, "adapter declared " + std::to_string(declared) +
                                               " values but sent " +
                                               std::to_string(values.size()));
  }
  return values;
}

std::string format_response(std::span<const double> values) {
  std::string out = std::to_string(values.size()) + "\t";
  char buf[32];
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out.push_back(',');
    std::snprintf(buf, sizeof buf, "%.17g", values[i]);
    out += buf;
  }
  return out;
}

}  // namespace embed_protocol

HttpEmbeddingAdapter::HttpEmbeddingAdapter(std::string host, int port,
                                           std::chrono::milliseconds timeout)
    : host_(std::move(host)), port_(port), timeout_(timeout) {}

std::vector<std::vector<double>> HttpEmbeddingAdapter::embed(
    std::span<const std::string> texts) {
  httplib::Client client(host_, port_);
  const auto secs = timeout_.count() / 1000;
  const auto usecs = (timeout_.count() % 1000) * 1000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  std::string body;
  for (const auto& t : texts) body += embed_protocol::format_request(t) + "\n";
  auto res = client.Post("/embed", body, "text/plain");
  if (!res) {
    throw Error(Errc::kAdapterUnreachable, "embedding adapter at " + host_ + ":" +
                                               std::to_string(port_) + ": " +
                                               httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(Errc::kAdapterUnreachable,
                "embedding adapter returned HTTP " + std::to_string(res->status));
  }
  std::vector<std::vector<double>> out;
  for (auto line : text::split_lines(res->body)) {
    if (line.empty()) continue;
    out.push_back(embed_protocol::parse_response(line));
  }
  if (out.size() != texts.size()) {
    throw Error(Errc::kAdapterUnreachable, "embedding adapter answered " +
                                               std::to_string(out.size()) + " of " +
                                               std::to_string(texts.size()) + " texts");
  }
  return out;
}

ProcessEmbeddingAdapter::ProcessEmbeddingAdapter(std::vector<std::string> argv,
                                                 std::chrono::milliseconds timeout)
    : argv_(std::move(argv)), timeout_(timeout) {
  if (argv_.empty()) throw Error(Errc::kInvalidArgument, "adapter command is empty");
}

ProcessEmbeddingAdapter::~ProcessEmbeddingAdapter() { shutdown(); }

void ProcessEmbeddingAdapter::spawn() {
  int in_pair[2];
  int out_pair[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM, 0, in_pair) != 0 ||
      ::socketpair(AF_UNIX, SOCK_STREAM, 0, out_pair) != 0) {
    throw Error(Errc::kAdapterUnreachable, "socketpair: " + std::string(std::strerror(errno)));
  }
  const pid_t pid = ::fork();
  if (pid < 0) throw Error(Errc::kAdapterUnreachable, "fork failed");
  if (pid == 0) {
    ::dup2(in_pair[1], STDIN_FILENO);
    ::dup2(out_pair[1], STDOUT_FILENO);
    ::close(in_pair[0]);
    ::close(in_pair[1]);
    ::close(out_pair[0]);
    ::close(out_pair[1]);
    std::vector<char*> args;
    for (auto& a : argv_) args.push_back(a.data());
    args.push_back(nullptr);
    ::execvp(args[0], args.data());
    ::_exit(127);
  }
  ::close(in_pair[1]);
  ::close(out_pair[1]);
  pid_ = pid;
  to_child_ = in_pair[0];
  from_child_ = out_pair[0];
  buffer_.clear();
}

void ProcessEmbeddingAdapter::shutdown() {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, nullptr, 0);
  }
  pid_ = -1;
}

std::string ProcessEmbeddingAdapter::read_line(std::chrono::steady_clock::time_point deadline) {
  while (true) {
    if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) throw Error(Errc::kAdapterUnreachable, "embedding adapter timed out");
    pollfd pfd{from_child_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(left.count()));
    if (ready < 0 && errno == EINTR) continue;
    if (ready <= 0) throw Error(Errc::kAdapterUnreachable, "embedding adapter timed out");
    char chunk[4096];
    const auto got = ::recv(from_child_, chunk, sizeof chunk, 0);
    if (got <= 0) throw Error(Errc::kAdapterUnreachable, "embedding adapter closed its output");
    buffer_.append(chunk, static_cast<std::size_t>(got));
  }
}

std::vector<std::vector<double>> ProcessEmbeddingAdapter::embed(
    std::span<const std::string> texts) {
  if (pid_ < 0) spawn();
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  std::vector<std::vector<double>> out;
  try {
    for (const auto& t : texts) {
      const std::string line = embed_protocol::format_request(t) + "\n";
      std::size_t sent = 0;
      while (sent < line.size()) {
        const auto n = ::send(to_child_, line.data() + sent, line.size() - sent, MSG_NOSIGNAL);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) throw Error(Errc::kAdapterUnreachable, "embedding adapter is not reading");
        sent += static_cast<std::size_t>(n);
      }
      out.push_back(embed_protocol::parse_response(read_line(deadline)));
    }
  } catch (const Error&) {
    // The stream position is unknown after a failure; start over next time.
    shutdown();
    throw;
  }
  return out;
}

std::vector<Embedding> encode_external(EmbeddingAdapter& adapter, const EncoderModel& model,
                                       std::span<const std::string> texts) {
  std::vector<std::vector<double>> raw;
  try {
    raw = adapter.embed(texts);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(Errc::kAdapterUnreachable, std::string("embedding adapter: ") + e.what());
  }
  if (raw.size() != texts.size()) {
    throw Error(Errc::kAdapterUnreachable, "embedding adapter returned a partial batch");
  }
  std::vector<Embedding> out;
  out.reserve(raw.size());
  for (auto& v : raw) {
    if (v.size() != model.dimension()) {
      throw Error(Errc::kDimensionMismatch, "adapter produced " + std::to_string(v.size()) +
                                                "-dim vectors, model expects " +
                                                std::to_string(model.dimension()));
    }
    if (std::abs(l2_norm(v) - 1.0) > 1e-12) l2_normalize(v);
    out.push_back(Embedding{std::move(v), model.fingerprint()});
  }
  return out;
}

}  // namespace attentive
