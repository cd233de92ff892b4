#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "attentive/dialog.hpp"

namespace attentive {

/// Hand-coded quality of one open-ended answer, each dimension 0 (bad) to 2 (good).
struct CodedResponse {
  int relevance = 0;
  int clarity = 0;
  int specificity = 0;

  bool operator==(const CodedResponse&) const = default;
};

/// Sum of relevance*clarity*specificity. Throws Error(kEmptyCoding) for an
/// empty list and Error(kScoreOutOfRange) for codes outside 0..2.
int rqi(std::span<const CodedResponse> coded);

class UnigramModel {
 public:
  enum class Smoothing { kAddOne, kNone };

  /// Counts word tokens over a reference corpus.
  static UnigramModel fit(std::span<const std::string> corpus,
                          Smoothing smoothing = Smoothing::kAddOne);
  static UnigramModel from_counts(std::map<std::string, std::uint64_t, std::less<>> counts,
                                  Smoothing smoothing);

  /// Add-one: (count+1)/(total+V+1), with one extra pseudo-count reserved for
  /// all unseen tokens together. None: count/total.
  double probability(std::string_view token) const;
  double unknown_probability() const;

  std::uint64_t total() const { return total_; }
  std::size_t vocabulary_size() const { return counts_.size(); }

 private:
  std::map<std::string, std::uint64_t, std::less<>> counts_;
  std::uint64_t total_ = 0;
  Smoothing smoothing_ = Smoothing::kAddOne;
};

/// Self-information in bits: the sum of -log2 p(t) over every word token.
double informativeness(std::span<const std::string> responses, const UnigramModel& model);

/// Texts of the user turns, in order.
std::vector<std::string> user_texts(std::span<const Turn> transcript);

/// Words over user turns only. Throws Error(kEmptyTranscript).
std::size_t response_length(std::span<const Turn> transcript);
/// Minutes between the first and last turn. Throws Error(kEmptyTranscript).
double engagement_duration(std::span<const Turn> transcript);

struct RatingIndices {
  int agent_comprehension = 0;
  std::optional<int> interest;
  std::optional<int> chat;
};

/// agentC is the sum of the listed topics' ratings. Throws
/// Error(kMissingRating) naming the first topic without a rating and
/// Error(kScoreOutOfRange) for ratings outside 1..5.
RatingIndices aggregate_ratings(const std::map<std::string, int>& topic_ratings,
                                std::span<const std::string> rated_topics,
                                std::optional<int> interest, std::optional<int> chat);

inline constexpr std::string_view kCodingHeader =
    "session\tresponse_index\trelevance\tclarity\tspecificity";

/// Parses a coding sheet into per-session codes ordered by response index.
/// Throws RowError(kMalformedRow) or RowError(kScoreOutOfRange).
std::map<std::string, std::vector<CodedResponse>> parse_coding_sheet(std::string_view sheet);

struct ParticipantMetrics {
  std::string session_id;
  std::string agenda_id;
  double duration_minutes = 0.0;
  std::size_t response_words = 0;
  double informativeness_bits = 0.0;
  std::optional<int> rqi;
  std::optional<int> agent_comprehension;
  std::optional<int> interest;
  std::optional<int> chat;
};

/// Computes every measure available for one session. RQI and agentC are left
/// empty when coding or ratings are missing.
ParticipantMetrics measure(const Session& session, const UnigramModel& reference,
                           std::span<const std::string> rated_topics,
                           const std::vector<CodedResponse>* coded);

/// Tab-separated, one header row then one row per participant; missing values
/// are written as NA.
std::string render_metrics_report(std::span<const ParticipantMetrics> rows);

}  // namespace attentive
