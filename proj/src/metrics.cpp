#include "attentive/metrics.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>

#include "attentive/error.hpp"
#include "attentive/text.hpp"

namespace attentive {

namespace {

bool valid_code(int v) { return v >= 0 && v <= 2; }

std::optional<int> parse_int(std::string_view s) {
  int v = 0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end) return std::nullopt;
  return v;
}

}  // namespace

int rqi(std::span<const CodedResponse> coded) {
  if (coded.empty()) throw Error(Errc::kEmptyCoding, "no coded responses");
  int sum = 0;
  for (const auto& c : coded) {
    if (!valid_code(c.relevance) || !valid_code(c.clarity) || !valid_code(c.specificity)) {
      throw Error(Errc::kScoreOutOfRange, "response codes must be 0, 1 or 2");
    }
    sum += c.relevance * c.clarity * c.specificity;
  }
  return sum;
}

UnigramModel UnigramModel::fit(std::span<const std::string> corpus, Smoothing smoothing) {
  std::map<std::string, std::uint64_t, std::less<>> counts;
  for (const auto& doc : corpus) {
    for (auto& w : text::words(doc)) ++counts[w];
  }
  return from_counts(std::move(counts), smoothing);
}

UnigramModel UnigramModel::from_counts(std::map<std::string, std::uint64_t, std::less<>> counts,
                                       Smoothing smoothing) {
  UnigramModel m;
  m.counts_ = std::move(counts);
  m.smoothing_ = smoothing;
  for (const auto& [token, c] : m.counts_) m.total_ += c;
  return m;
}

double UnigramModel::probability(std::string_view token) const {
  const auto it = counts_.find(token);
  if (it == counts_.end()) return unknown_probability();
  const auto c = static_cast<double>(it->second);
  if (smoothing_ == Smoothing::kNone) return c / static_cast<double>(total_);
  return (c + 1.0) / static_cast<double>(total_ + counts_.size() + 1);
}

double UnigramModel::unknown_probability() const {
  if (smoothing_ == Smoothing::kNone) return 0.0;
  return 1.0 / static_cast<double>(total_ + counts_.size() + 1);
}

double informativeness(std::span<const std::string> responses, const UnigramModel& model) {
  double bits = 0.0;
  for (const auto& r : responses) {
    for (const auto& w : text::words(r)) bits -= std::log2(model.probability(w));
  }
  return bits;
}

std::vector<std::string> user_texts(std::span<const Turn> transcript) {
  std::vector<std::string> out;
  for (const auto& t : transcript) {
    if (t.speaker == Speaker::kUser) out.push_back(t.text);
  }
  return out;
}

std::size_t response_length(std::span<const Turn> transcript) {
  if (transcript.empty()) throw Error(Errc::kEmptyTranscript, "transcript is empty");
  std::size_t n = 0;
  for (const auto& t : transcript) {
    if (t.speaker == Speaker::kUser) n += text::word_count(t.text);
  }
  return n;
}

double engagement_duration(std::span<const Turn> transcript) {
  if (transcript.empty()) throw Error(Errc::kEmptyTranscript, "transcript is empty");
  return static_cast<double>(transcript.back().at - transcript.front().at) / 60000.0;
}

RatingIndices aggregate_ratings(const std::map<std::string, int>& topic_ratings,
                                std::span<const std::string> rated_topics,
                                std::optional<int> interest, std::optional<int> chat) {
  auto check = [](int v, const std::string& what) {
    if (v < 1 || v > 5) throw Error(Errc::kScoreOutOfRange, what + " rating must be 1-5");
  };
  RatingIndices out;
  for (const auto& topic : rated_topics) {
    const auto it = topic_ratings.find(topic);
    if (it == topic_ratings.end()) {
      throw Error(Errc::kMissingRating, "no rating for topic '" + topic + "'");
    }
    check(it->second, "topic " + topic);
    out.agent_comprehension += it->second;
  }
  if (interest) check(*interest, "interest");
  if (chat) check(*chat, "chat");
  out.interest = interest;
  out.chat = chat;
  return out;
}

std::map<std::string, std::vector<CodedResponse>> parse_coding_sheet(std::string_view sheet) {
  const auto lines = text::split_lines(sheet);
  if (lines.empty() || lines.front() != kCodingHeader) {
    throw RowError(Errc::kMalformedRow, "expected coding sheet header", 1);
  }
  std::map<std::string, std::map<int, CodedResponse>> by_session;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    if (text::trim(lines[i]).empty()) continue;
    const auto f = text::split_tabs(lines[i]);
    if (f.size() != 5) throw RowError(Errc::kMalformedRow, "expected 5 fields", line_no);
    const auto index = parse_int(text::trim(f[1]));
    if (!index) throw RowError(Errc::kMalformedRow, "bad response_index", line_no);
    std::array<int, 3> codes{};
    for (std::size_t k = 0; k < 3; ++k) {
      const auto v = parse_int(text::trim(f[k + 2]));
      if (!v) throw RowError(Errc::kMalformedRow, "code is not an integer", line_no);
      if (!valid_code(*v)) throw RowError(Errc::kScoreOutOfRange, "code must be 0, 1 or 2", line_no);
      codes[k] = *v;
    }
    auto& session = by_session[text::trim(f[0])];
    if (!session.emplace(*index, CodedResponse{codes[0], codes[1], codes[2]}).second) {
      throw RowError(Errc::kMalformedRow, "duplicate response_index", line_no);
    }
  }
  std::map<std::string, std::vector<CodedResponse>> out;
  for (auto& [session, rows] : by_session) {
    auto& list = out[session];
    for (auto& [index, code] : rows) list.push_back(code);
  }
  return out;
}

ParticipantMetrics measure(const Session& session, const UnigramModel& reference,
                           std::span<const std::string> rated_topics,
                           const std::vector<CodedResponse>* coded) {
  ParticipantMetrics m;
  m.session_id = session.id;
  m.agenda_id = session.agenda_id;
  m.duration_minutes = engagement_duration(session.transcript);
  m.response_words = response_length(session.transcript);
  m.informativeness_bits = informativeness(user_texts(session.transcript), reference);
  if (coded && !coded->empty()) m.rqi = rqi(*coded);
  try {
    const auto r =
        aggregate_ratings(session.ratings, rated_topics, session.interest_rating, session.chat_rating);
    m.agent_comprehension = r.agent_comprehension;
  } catch (const Error& e) {
    if (e.code() != Errc::kMissingRating) throw;
  }
  m.interest = session.interest_rating;
  m.chat = session.chat_rating;
  return m;
}

std::string render_metrics_report(std::span<const ParticipantMetrics> rows) {
  std::string out =
      "session\tagenda\tduration_min\tresponse_words\tinformativeness_bits\trqi\tagentC\tinterestR\t"
      "chatR\n";
  auto opt = [](const std::optional<int>& v) { return v ? std::to_string(*v) : std::string("NA"); };
  char buf[64];
  for (const auto& r : rows) {
    out += r.session_id + '\t' + r.agenda_id + '\t';
    std::snprintf(buf, sizeof buf, "%.2f", r.duration_minutes);
    out += buf;
    out += '\t' + std::to_string(r.response_words) + '\t';
    std::snprintf(buf, sizeof buf, "%.2f", r.informativeness_bits);
    out += buf;
    out += '\t' + opt(r.rqi) + '\t' + opt(r.agent_comprehension) + '\t' + opt(r.interest) + '\t' +
           opt(r.chat) + '\n';
  }
  return out;
}

}  // namespace attentive
