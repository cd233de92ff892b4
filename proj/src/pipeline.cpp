#include "attentive/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <tuple>

#include "attentive/encoder.hpp"
#include "attentive/error.hpp"
#include "attentive/random.hpp"
#include "attentive/text.hpp"

namespace attentive {

PreprocessConfig PreprocessConfig::defaults() {
  PreprocessConfig c;
  c.stopwords = text::default_stopwords();
  return c;
}

std::size_t TokenizedCorpus::active_count() const {
  return static_cast<std::size_t>(std::count(skipped.begin(), skipped.end(), false));
}

std::size_t TokenizedCorpus::token_count() const {
  std::size_t n = 0;
  for (const auto& d : docs) n += d.size();
  return n;
}

TokenizedCorpus preprocess(std::span<const std::pair<std::string, std::string>> texts,
                           const PreprocessConfig& config) {
  if (texts.empty()) throw Error(Errc::kEmptyInput, "no documents to preprocess");
  TokenizedCorpus c;
  for (const auto& [id, body] : texts) {
    if (c.raw.contains(id)) throw Error(Errc::kInvalidArgument, "duplicate document id '" + id + "'");
    c.raw.emplace(id, body);
    c.doc_ids.push_back(id);
    std::vector<TokenId> doc;
    for (auto& w : text::words(body)) {
      if (w.size() < config.min_token_length || config.stopwords.contains(w)) continue;
      auto [it, inserted] = c.vocab.try_emplace(w, static_cast<TokenId>(c.vocabulary.size()));
      if (inserted) c.vocabulary.push_back(w);
      doc.push_back(it->second);
    }
    c.skipped.push_back(doc.empty());
    c.docs.push_back(std::move(doc));
  }
  return c;
}

namespace {

// Collapsed Gibbs state over the non-skipped documents.
class GibbsSampler {
 public:
  GibbsSampler(const TokenizedCorpus& corpus, std::size_t k, double alpha, double beta, Rng& rng)
      : corpus_(corpus),
        k_(k),
        v_(corpus.vocabulary.size()),
        alpha_(alpha),
        beta_(beta),
        rng_(rng),
        doc_topic_(corpus.docs.size(), std::vector<std::uint32_t>(k, 0)),
        topic_word_(k, std::vector<std::uint32_t>(v_, 0)),
        topic_total_(k, 0),
        assignment_(corpus.docs.size()),
        weights_(k) {
    for (std::size_t d = 0; d < corpus_.docs.size(); ++d) {
      const auto& doc = corpus_.docs[d];
      assignment_[d].resize(doc.size());
      for (std::size_t i = 0; i < doc.size(); ++i) {
        const auto z = static_cast<std::uint32_t>(uniform_index(rng_, k_));
        assignment_[d][i] = z;
        add(d, doc[i], z);
      }
      total_tokens_ += doc.size();
    }
  }

  void sweep() {
    const double v_beta = static_cast<double>(v_) * beta_;
    for (std::size_t d = 0; d < corpus_.docs.size(); ++d) {
      const auto& doc = corpus_.docs[d];
      for (std::size_t i = 0; i < doc.size(); ++i) {
        const TokenId w = doc[i];
        remove(d, w, assignment_[d][i]);
        double total = 0.0;
        for (std::size_t t = 0; t < k_; ++t) {
          total += (doc_topic_[d][t] + alpha_) * (topic_word_[t][w] + beta_) /
                   (topic_total_[t] + v_beta);
          weights_[t] = total;
        }
        const double u = uniform01(rng_) * total;
        std::size_t z = 0;
        while (z + 1 < k_ && weights_[z] <= u) ++z;
        assignment_[d][i] = static_cast<std::uint32_t>(z);
        add(d, w, static_cast<std::uint32_t>(z));
      }
    }
  }

  /// Count tables must account for every token exactly once.
  bool conserved() const {
    const std::uint64_t by_topic =
        std::accumulate(topic_total_.begin(), topic_total_.end(), std::uint64_t{0});
    if (by_topic != total_tokens_) return false;
    for (std::size_t d = 0; d < corpus_.docs.size(); ++d) {
      const auto n = std::accumulate(doc_topic_[d].begin(), doc_topic_[d].end(), std::uint64_t{0});
      if (n != corpus_.docs[d].size()) return false;
    }
    for (std::size_t t = 0; t < k_; ++t) {
      const auto n =
          std::accumulate(topic_word_[t].begin(), topic_word_[t].end(), std::uint64_t{0});
      if (n != topic_total_[t]) return false;
    }
    return true;
  }

  std::vector<std::vector<double>> phi() const {
    const double v_beta = static_cast<double>(v_) * beta_;
    std::vector<std::vector<double>> out(k_, std::vector<double>(v_));
    for (std::size_t t = 0; t < k_; ++t) {
      for (std::size_t w = 0; w < v_; ++w) {
        out[t][w] = (topic_word_[t][w] + beta_) / (topic_total_[t] + v_beta);
      }
    }
    return out;
  }

  std::vector<std::vector<double>> theta() const {
    const double k_alpha = static_cast<double>(k_) * alpha_;
    std::vector<std::vector<double>> out(corpus_.docs.size(), std::vector<double>(k_));
    for (std::size_t d = 0; d < corpus_.docs.size(); ++d) {
      const double n_d = static_cast<double>(corpus_.docs[d].size());
      for (std::size_t t = 0; t < k_; ++t) {
        out[d][t] = (doc_topic_[d][t] + alpha_) / (n_d + k_alpha);
      }
    }
    return out;
  }

 private:
  void add(std::size_t d, TokenId w, std::uint32_t z) {
    ++doc_topic_[d][z];
    ++topic_word_[z][w];
    ++topic_total_[z];
  }
  void remove(std::size_t d, TokenId w, std::uint32_t z) {
    --doc_topic_[d][z];
    --topic_word_[z][w];
    --topic_total_[z];
  }

  const TokenizedCorpus& corpus_;
  std::size_t k_;
  std::size_t v_;
  double alpha_;
  double beta_;
  Rng& rng_;
  std::vector<std::vector<std::uint32_t>> doc_topic_;
  std::vector<std::vector<std::uint32_t>> topic_word_;
  std::vector<std::uint64_t> topic_total_;
  std::vector<std::vector<std::uint32_t>> assignment_;
  std::vector<double> weights_;
  std::uint64_t total_tokens_ = 0;
};

}  // namespace

TopicModel lda_fit(const TokenizedCorpus& corpus, const LdaParams& params,
                   LdaDiagnostics* diagnostics) {
  const std::size_t k = params.topics;
  if (k < 2) throw Error(Errc::kInvalidArgument, "LDA needs at least 2 topics");
  if (params.iterations < 1) throw Error(Errc::kInvalidArgument, "LDA needs at least 1 iteration");
  const double alpha = params.alpha.value_or(50.0 / static_cast<double>(k));
  if (!(alpha > 0.0) || !(params.beta > 0.0)) {
    throw Error(Errc::kInvalidArgument, "alpha and beta must be positive");
  }
  if (corpus.active_count() < k) {
    throw Error(Errc::kTooFewDocuments, "need at least " + std::to_string(k) +
                                            " non-empty documents, have " +
                                            std::to_string(corpus.active_count()));
  }
  if (corpus.vocabulary.size() < k) {
    throw Error(Errc::kDegenerateVocabulary, "vocabulary of " +
                                                 std::to_string(corpus.vocabulary.size()) +
                                                 " tokens is smaller than " + std::to_string(k));
  }

  Rng rng(params.seed);
  GibbsSampler sampler(corpus, k, alpha, params.beta, rng);
  for (std::size_t it = 0; it < params.iterations; ++it) {
    sampler.sweep();
    if (!sampler.conserved()) {
      throw std::logic_error("Gibbs count tables lost tokens in sweep " + std::to_string(it));
    }
    if (diagnostics) ++diagnostics->sweeps_verified;
  }

  TopicModel m;
  m.topics = k;
  m.alpha = alpha;
  m.beta = params.beta;
  m.phi = sampler.phi();
  m.theta = sampler.theta();
  m.seed = params.seed;
  m.iterations = params.iterations;
  for (std::size_t t = 0; t < k; ++t) {
    std::vector<TokenId> order(corpus.vocabulary.size());
    std::iota(order.begin(), order.end(), TokenId{0});
    const auto& row = m.phi[t];
    const std::size_t top = std::min<std::size_t>(10, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top), order.end(),
                      [&](TokenId a, TokenId b) {
                        return row[a] != row[b] ? row[a] > row[b] : a < b;
                      });
    std::vector<std::string> words;
    for (std::size_t i = 0; i < top; ++i) words.push_back(corpus.vocabulary[order[i]]);
    m.top_keywords.push_back(std::move(words));
  }
  return m;
}

std::string intent_id_for(std::size_t topic_index) {
  return "c" + std::to_string(topic_index + 1);
}

std::optional<std::size_t> intent_index_from_id(std::string_view id) {
  if (id.size() < 2 || id[0] != 'c') return std::nullopt;
  std::size_t n = 0;
  for (char c : id.substr(1)) {
    if (c < '0' || c > '9') return std::nullopt;
    n = n * 10 + static_cast<std::size_t>(c - '0');
    if (n > 1'000'000) return std::nullopt;
  }
  if (n == 0) return std::nullopt;
  return n - 1;
}

std::vector<IntentSummary> rank_intents(const TopicModel& model, const TokenizedCorpus& corpus) {
  std::vector<IntentSummary> out(model.topics);
  for (std::size_t t = 0; t < model.topics; ++t) {
    out[t].intent_id = intent_id_for(t);
    out[t].index = t;
    if (t < model.top_keywords.size()) out[t].keywords = model.top_keywords[t];
  }
  std::size_t active = 0;
  for (std::size_t d = 0; d < model.theta.size(); ++d) {
    if (d < corpus.skipped.size() && corpus.skipped[d]) continue;
    ++active;
    const auto& row = model.theta[d];
    // max_element returns the first maximum, i.e. the lowest index on ties.
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    out[best].member_doc_ids.push_back(corpus.doc_ids[d]);
  }
  for (auto& s : out) {
    s.coverage = active == 0 ? 0.0
                             : static_cast<double>(s.member_doc_ids.size()) /
                                   static_cast<double>(active);
  }
  std::stable_sort(out.begin(), out.end(), [](const IntentSummary& a, const IntentSummary& b) {
    return a.member_doc_ids.size() > b.member_doc_ids.size();
  });
  return out;
}

std::vector<IntentSummary> filter_by_coverage(std::vector<IntentSummary> ranked,
                                              double min_coverage) {
  std::erase_if(ranked, [&](const IntentSummary& s) { return s.coverage < min_coverage; });
  return ranked;
}

std::vector<std::string> select_cluster(const TopicModel& model, const TokenizedCorpus& corpus,
                                        std::string_view intent_id, double threshold) {
  const auto index = intent_index_from_id(intent_id);
  if (!index || *index >= model.topics) {
    throw Error(Errc::kUnknownIntent, "unknown intent '" + std::string(intent_id) + "'");
  }
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw Error(Errc::kInvalidArgument, "cluster threshold must be in (0,1)");
  }
  std::vector<std::string> out;
  for (std::size_t d = 0; d < model.theta.size(); ++d) {
    if (d < corpus.skipped.size() && corpus.skipped[d]) continue;
    if (model.theta[d][*index] > threshold) out.push_back(corpus.doc_ids[d]);
  }
  return out;
}

std::vector<double> lexrank_scores(const std::vector<std::vector<double>>& similarity,
                                   const LexRankParams& params) {
  const std::size_t n = similarity.size();
  if (n == 0) throw Error(Errc::kEmptyCluster, "cluster is empty");
  const double d = params.damping;
  if (!(d > 0.0 && d < 1.0)) throw Error(Errc::kInvalidArgument, "damping must be in (0,1)");

  std::vector<std::vector<double>> transition(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    if (similarity[i].size() != n) throw Error(Errc::kDimensionMismatch, "similarity is not square");
    double row_sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double s = similarity[i][j];
      if (s >= params.sim_threshold) {
        transition[i][j] = s;
        row_sum += s;
      }
    }
    for (std::size_t j = 0; j < n; ++j) {
      transition[i][j] = row_sum > 0.0 ? transition[i][j] / row_sum : 1.0 / static_cast<double>(n);
    }
  }

  std::vector<double> p(n, 1.0 / static_cast<double>(n));
  std::vector<double> next(n);
  // The damped walk contracts by d per step, so d/(1-d) times the last step
  // bounds the distance to the fixed point in L1.
  for (std::size_t it = 0; it < params.max_iterations; ++it) {
    std::fill(next.begin(), next.end(), (1.0 - d) / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) next[j] += d * p[i] * transition[i][j];
    }
    double delta = 0.0;
    for (std::size_t j = 0; j < n; ++j) delta += std::abs(next[j] - p[j]);
    p.swap(next);
    if (d / (1.0 - d) * delta < params.tolerance) break;
  }
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  for (auto& x : p) x /= total;
  return p;
}

std::vector<RankedResponse> lexrank(std::span<const std::string> doc_ids,
                                    const std::vector<std::vector<double>>& vectors,
                                    const LexRankParams& params) {
  const std::size_t n = doc_ids.size();
  if (n == 0) throw Error(Errc::kEmptyCluster, "cluster is empty");
  if (vectors.size() != n) throw Error(Errc::kDimensionMismatch, "one vector per document required");
  const std::size_t dim = vectors.front().size();
  for (const auto& v : vectors) {
    if (v.size() != dim) throw Error(Errc::kDimensionMismatch, "cluster vectors differ in dimension");
  }

  std::vector<std::vector<double>> sim(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) sim[i][j] = sim[j][i] = cosine(vectors[i], vectors[j]);
  }
  const auto scores = lexrank_scores(sim, params);

  std::vector<double> centroid(dim, 0.0);
  for (const auto& v : vectors) {
    for (std::size_t k = 0; k < dim; ++k) centroid[k] += v[k] / static_cast<double>(n);
  }

  std::vector<RankedResponse> out(n);
  const double w = params.centrality_weight;
  for (std::size_t i = 0; i < n; ++i) {
    out[i].doc_id = doc_ids[i];
    out[i].lexrank_score = scores[i];
    out[i].centroid_sim = cosine(vectors[i], centroid);
    out[i].combined = w * (scores[i] * static_cast<double>(n)) +
                      (1.0 - w) * ((out[i].centroid_sim + 1.0) / 2.0);
  }
  std::sort(out.begin(), out.end(), [](const RankedResponse& a, const RankedResponse& b) {
    return a.combined != b.combined ? a.combined > b.combined : a.doc_id < b.doc_id;
  });
  return out;
}

std::string_view label_name(Label l) {
  switch (l) {
    case Label::kPositive: return "positive";
    case Label::kNegative: return "negative";
    case Label::kDrop: return "drop";
  }
  return "?";
}

std::optional<Label> parse_label(std::string_view name) {
  for (auto l : {Label::kPositive, Label::kNegative, Label::kDrop}) {
    if (label_name(l) == name) return l;
  }
  return std::nullopt;
}

std::string_view label_source_name(LabelSource s) {
  switch (s) {
    case LabelSource::kAuto: return "auto";
    case LabelSource::kHuman: return "human";
    case LabelSource::kSkipped: return "skipped";
  }
  return "?";
}

std::optional<LabelSource> parse_label_source(std::string_view name) {
  for (auto s : {LabelSource::kAuto, LabelSource::kHuman, LabelSource::kSkipped}) {
    if (label_source_name(s) == name) return s;
  }
  return std::nullopt;
}

std::size_t slice_size(std::size_t n, double fraction) {
  // The epsilon keeps products like 0.1 * 30 from flooring to 2.
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

std::vector<LabeledExample> auto_label(std::span<const RankedResponse> ranked, double fraction,
                                       const std::map<std::string, std::string, std::less<>>& raw,
                                       std::string_view topic_id, std::string_view intent_id) {
  if (!(fraction > 0.0 && fraction <= 0.5)) {
    throw Error(Errc::kFractionOutOfRange, "fraction must be in (0, 0.5], got " +
                                               std::to_string(fraction));
  }
  const std::size_t take = slice_size(ranked.size(), fraction);
  auto make = [&](const RankedResponse& r, Label label) {
    const auto it = raw.find(r.doc_id);
    if (it == raw.end()) {
      throw Error(Errc::kInvalidArgument, "no text for document '" + r.doc_id + "'");
    }
    return LabeledExample{it->second, std::string(topic_id), std::string(intent_id), label,
                          LabelSource::kAuto};
  };
  std::vector<LabeledExample> out;
  out.reserve(2 * take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(make(ranked[i], Label::kPositive));
  for (std::size_t i = ranked.size() - take; i < ranked.size(); ++i) {
    out.push_back(make(ranked[i], Label::kNegative));
  }
  return out;
}

std::vector<LabeledExample> skipped_rows(const TokenizedCorpus& corpus, std::string_view topic_id,
                                         std::string_view intent_id) {
  std::vector<LabeledExample> out;
  for (std::size_t d = 0; d < corpus.docs.size(); ++d) {
    if (!corpus.skipped[d]) continue;
    const auto& body = corpus.raw.find(corpus.doc_ids[d])->second;
    // Review rows need visible text; an empty response shows as its id.
    out.push_back({body.empty() ? corpus.doc_ids[d] : body, std::string(topic_id),
                   std::string(intent_id), Label::kDrop, LabelSource::kSkipped});
  }
  return out;
}

std::string review_export(std::span<const LabeledExample> examples) {
  if (examples.empty()) throw Error(Errc::kEmptyInput, "nothing to export");
  std::string out(kReviewHeader);
  out += '\n';
  for (const auto& e : examples) {
    out += text::escape_field(e.text);
    out += '\t';
    out += text::escape_field(e.topic_id);
    out += '\t';
    out += text::escape_field(e.intent_id);
    out += '\t';
    out += label_name(e.label);
    out += '\t';
    out += label_source_name(e.source);
    out += '\n';
  }
  return out;
}

namespace {

std::vector<LabeledExample> parse_review_rows(std::string_view review_text) {
  const auto lines = text::split_lines(review_text);
  if (lines.empty() || lines.front() != kReviewHeader) {
    throw RowError(Errc::kMalformedRow,
                   "expected header '" + text::escape_field(kReviewHeader) + "'", 1);
  }
  std::vector<LabeledExample> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    const auto fields = text::split_tabs(lines[i]);
    if (fields.size() != 5) {
      throw RowError(Errc::kMalformedRow,
                     "expected 5 tab-separated fields, found " + std::to_string(fields.size()),
                     line_no);
    }
    LabeledExample e;
    e.text = text::unescape_field(fields[0]);
    if (text::trim(e.text).empty()) throw RowError(Errc::kMalformedRow, "empty text", line_no);
    e.topic_id = text::unescape_field(fields[1]);
    e.intent_id = text::unescape_field(fields[2]);
    const auto label = parse_label(text::trim(fields[3]));
    if (!label) {
      throw RowError(Errc::kUnknownLabel, "unknown label '" + std::string(fields[3]) + "'", line_no);
    }
    e.label = *label;
    const auto source = parse_label_source(text::trim(fields[4]));
    if (!source) {
      throw RowError(Errc::kMalformedRow, "unknown source '" + std::string(fields[4]) + "'",
                     line_no);
    }
    e.source = *source;
    rows.push_back(std::move(e));
  }
  return rows;
}

}  // namespace

std::vector<LabeledExample> review_import(std::string_view review_text,
                                          std::optional<std::string_view> baseline) {
  auto rows = parse_review_rows(review_text);
  if (baseline) {
    using Key = std::tuple<std::string, std::string, std::string>;
    std::map<Key, std::deque<Label>> exported;
    for (const auto& e : parse_review_rows(*baseline)) {
      exported[{e.text, e.topic_id, e.intent_id}].push_back(e.label);
    }
    for (auto& e : rows) {
      auto it = exported.find({e.text, e.topic_id, e.intent_id});
      if (it == exported.end() || it->second.empty()) {
        e.source = LabelSource::kHuman;
        continue;
      }
      const Label original = it->second.front();
      it->second.pop_front();
      if (original != e.label) e.source = LabelSource::kHuman;
    }
  }
  std::erase_if(rows, [](const LabeledExample& e) { return e.label == Label::kDrop; });
  return rows;
}

std::vector<LabeledExample> relevance_examples(std::span<const std::string> topic_responses,
                                               std::span<const std::string> other_responses,
                                               std::span<const std::string> side_talk,
                                               std::string_view topic_id, std::uint64_t seed) {
  std::vector<std::string> pool(other_responses.begin(), other_responses.end());
  pool.insert(pool.end(), side_talk.begin(), side_talk.end());
  const std::size_t n = std::min(topic_responses.size(), pool.size());
  if (n == 0) throw Error(Errc::kEmptyInput, "relevance data needs responses from both sides");

  Rng rng(seed);
  auto choose = [&](std::size_t size) {
    std::vector<std::size_t> idx(size);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    shuffle(std::span<std::size_t>(idx), rng);
    idx.resize(n);
    std::sort(idx.begin(), idx.end());
    return idx;
  };
  std::vector<LabeledExample> out;
  for (auto i : choose(topic_responses.size())) {
    out.push_back({topic_responses[i], std::string(topic_id), "relevance", Label::kPositive,
                   LabelSource::kAuto});
  }
  for (auto i : choose(pool.size())) {
    out.push_back({pool[i], std::string(topic_id), "relevance", Label::kNegative, LabelSource::kAuto});
  }
  return out;
}

}  // namespace attentive
