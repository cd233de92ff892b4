#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace attentive {

using TokenId = std::uint32_t;

struct PreprocessConfig {
  std::set<std::string, std::less<>> stopwords;
  std::size_t min_token_length = 2;

  static PreprocessConfig defaults();
};

struct TokenizedCorpus {
  std::vector<std::string> doc_ids;
  std::vector<std::vector<TokenId>> docs;
  /// Token strings indexed by id, in first-seen order.
  std::vector<std::string> vocabulary;
  std::map<std::string, TokenId, std::less<>> vocab;
  std::map<std::string, std::string, std::less<>> raw;
  /// True for documents left empty by filtering.
  std::vector<bool> skipped;

  std::size_t active_count() const;
  std::size_t token_count() const;
};

/// Throws Error(kEmptyInput) for an empty list and kInvalidArgument for a
/// repeated document id.
TokenizedCorpus preprocess(std::span<const std::pair<std::string, std::string>> texts,
                           const PreprocessConfig& config = PreprocessConfig::defaults());

struct LdaParams {
  std::size_t topics = 5;
  /// Defaults to 50 / topics.
  std::optional<double> alpha;
  double beta = 0.01;
  std::size_t iterations = 1000;
  std::uint64_t seed = 0;
};

struct TopicModel {
  std::size_t topics = 0;
  double alpha = 0.0;
  double beta = 0.0;
  /// topics x vocabulary.
  std::vector<std::vector<double>> phi;
  /// documents x topics. Skipped documents get the prior mean (uniform).
  std::vector<std::vector<double>> theta;
  std::vector<std::vector<std::string>> top_keywords;
  std::uint64_t seed = 0;
  std::size_t iterations = 0;

  bool operator==(const TopicModel&) const = default;
};

struct LdaDiagnostics {
  /// Sweeps after which the count tables were verified against the token total.
  std::size_t sweeps_verified = 0;
};

/// Collapsed Gibbs sampling. Throws Error(kInvalidArgument) for topics < 2 or
/// zero iterations, kTooFewDocuments when fewer than `topics` documents have
/// tokens, and kDegenerateVocabulary when the vocabulary is smaller than
/// `topics`.
TopicModel lda_fit(const TokenizedCorpus& corpus, const LdaParams& params,
                   LdaDiagnostics* diagnostics = nullptr);

std::string intent_id_for(std::size_t topic_index);
/// Inverse of intent_id_for; nullopt for malformed ids.
std::optional<std::size_t> intent_index_from_id(std::string_view id);

struct IntentSummary {
  std::string intent_id;
  std::size_t index = 0;
  std::vector<std::string> keywords;
  double coverage = 0.0;
  std::vector<std::string> member_doc_ids;
};

/// Coverage of an intent is the share of non-skipped documents whose dominant
/// topic it is (lowest index wins ties). Sorted by coverage descending, then
/// index.
std::vector<IntentSummary> rank_intents(const TopicModel& model, const TokenizedCorpus& corpus);

std::vector<IntentSummary> filter_by_coverage(std::vector<IntentSummary> ranked,
                                              double min_coverage = 0.10);

/// Non-skipped documents with theta[doc][intent] > threshold, in corpus order.
/// Throws Error(kUnknownIntent) and, for threshold outside (0,1),
/// Error(kInvalidArgument).
std::vector<std::string> select_cluster(const TopicModel& model, const TokenizedCorpus& corpus,
                                        std::string_view intent_id, double threshold = 0.25);

struct LexRankParams {
  double sim_threshold = 0.1;
  double damping = 0.85;
  double tolerance = 1e-6;
  /// Weight of scaled centrality in the combined score; the rest goes to
  /// centroid proximity.
  double centrality_weight = 0.5;
  std::size_t max_iterations = 100000;
};

struct RankedResponse {
  std::string doc_id;
  double lexrank_score = 0.0;
  double centroid_sim = 0.0;
  double combined = 0.0;
};

/// Stationary distribution of the damped walk on a thresholded similarity
/// graph. Entries below sim_threshold are dropped, rows are normalized and
/// all-zero rows become uniform.
std::vector<double> lexrank_scores(const std::vector<std::vector<double>>& similarity,
                                   const LexRankParams& params = {});

/// Ranks a cluster. Vectors must be L2-normalized. Throws Error(kEmptyCluster)
/// and Error(kDimensionMismatch).
std::vector<RankedResponse> lexrank(std::span<const std::string> doc_ids,
                                    const std::vector<std::vector<double>>& vectors,
                                    const LexRankParams& params = {});

enum class Label { kPositive, kNegative, kDrop };
enum class LabelSource { kAuto, kHuman, kSkipped };

std::string_view label_name(Label l);
std::optional<Label> parse_label(std::string_view name);
std::string_view label_source_name(LabelSource s);
std::optional<LabelSource> parse_label_source(std::string_view name);

struct LabeledExample {
  std::string text;
  std::string topic_id;
  std::string intent_id;
  Label label = Label::kPositive;
  LabelSource source = LabelSource::kAuto;

  bool operator==(const LabeledExample&) const = default;
};

/// Number taken from each end of a ranking of n items.
std::size_t slice_size(std::size_t n, double fraction);

/// Top floor(fraction*N) as positives then bottom floor(fraction*N) as
/// negatives, both in ranking order. Throws Error(kFractionOutOfRange) unless
/// 0 < fraction <= 0.5.
std::vector<LabeledExample> auto_label(std::span<const RankedResponse> ranked, double fraction,
                                       const std::map<std::string, std::string, std::less<>>& raw,
                                       std::string_view topic_id, std::string_view intent_id);

/// Rows for documents emptied by preprocessing, labeled drop / skipped.
std::vector<LabeledExample> skipped_rows(const TokenizedCorpus& corpus, std::string_view topic_id,
                                         std::string_view intent_id);

inline constexpr std::string_view kReviewHeader = "text\ttopic\tintent\tlabel\tsource";

std::string review_export(std::span<const LabeledExample> examples);

/// Parses a review file. A row whose label differs from the exported
/// `baseline` (matched on text, topic and intent) comes back with source
/// human; rows labeled drop are removed. Throws RowError(kMalformedRow) or
/// RowError(kUnknownLabel) with the offending line.
std::vector<LabeledExample> review_import(std::string_view review_text,
                                          std::optional<std::string_view> baseline = std::nullopt);

/// Relevance training set for one topic: its own responses as positives and
/// an equal number of negatives drawn (seeded) from other topics' responses
/// and the side-talk corpus.
std::vector<LabeledExample> relevance_examples(std::span<const std::string> topic_responses,
                                               std::span<const std::string> other_responses,
                                               std::span<const std::string> side_talk,
                                               std::string_view topic_id, std::uint64_t seed);

}  // namespace attentive
