#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace attentive {

/// A fixed-length sentence vector tagged with the encoder that produced it.
struct Embedding {
  std::vector<double> values;
  std::string fingerprint;

  std::size_t dimension() const { return values.size(); }
  bool operator==(const Embedding&) const = default;
};

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);
/// Cosine similarity; 0 when either vector is zero.
double cosine(std::span<const double> a, std::span<const double> b);
void l2_normalize(std::vector<double>& v);

enum class EncoderKind { kBaseline, kExternal };

/// Signed feature hashing of idf-weighted word unigrams and bigrams.
class EncoderModel {
 public:
  static constexpr std::size_t kDefaultDimension = 512;
  static constexpr std::size_t kMinDimension = 16;
  static constexpr std::uint64_t kDefaultHashSeed = 0x5EEDF00DULL;

  /// Fits smoothed idf = ln((1+N)/(1+df)) + 1 over the corpus.
  static EncoderModel fit(std::span<const std::string> corpus,
                          std::size_t dimension = kDefaultDimension,
                          std::uint64_t hash_seed = kDefaultHashSeed);

  /// Model describing vectors that come from an external adapter.
  static EncoderModel external(std::string name, std::size_t dimension);

  Embedding encode(std::string_view text) const;

  /// Token weight; unseen tokens get ln(1+N)+1.
  double idf(const std::string& token) const;

  std::size_t dimension() const { return dimension_; }
  std::uint64_t hash_seed() const { return hash_seed_; }
  std::size_t document_count() const { return document_count_; }
  EncoderKind kind() const { return kind_; }
  const std::string& fingerprint() const { return fingerprint_; }
  const std::map<std::string, double>& idf_table() const { return idf_; }

  std::string to_json() const;
  /// Loads a model file; refuses a version or fingerprint mismatch.
  static EncoderModel from_json(std::string_view text);
  static EncoderModel load(const std::string& path);

  /// Unigrams followed by bigrams ("a b") of the word tokens.
  static std::vector<std::string> features(std::string_view text);

 private:
  std::string compute_fingerprint() const;

  std::size_t dimension_ = kDefaultDimension;
  std::uint64_t hash_seed_ = kDefaultHashSeed;
  std::size_t document_count_ = 0;
  std::map<std::string, double> idf_;
  EncoderKind kind_ = EncoderKind::kBaseline;
  std::string external_name_;
  std::string fingerprint_;
};

/// Line protocol spoken by external encoders:
///   request  "EMBED<TAB>text"      (text escaped like TSV fields)
///   response "D<TAB>v1,v2,...,vD"
namespace embed_protocol {
std::string format_request(std::string_view text);
/// Parses one response line; throws Error(kAdapterUnreachable) if malformed.
std::vector<double> parse_response(std::string_view line);
std::string format_response(std::span<const double> values);
}  // namespace embed_protocol

/// Something that turns texts into raw vectors, one per text, all-or-nothing.
class EmbeddingAdapter {
 public:
  virtual ~EmbeddingAdapter() = default;
  virtual std::vector<std::vector<double>> embed(std::span<const std::string> texts) = 0;
};

/// Talks the line protocol over HTTP POST /embed (one request line per text
/// in the body, one response line per text back).
class HttpEmbeddingAdapter : public EmbeddingAdapter {
 public:
  HttpEmbeddingAdapter(std::string host, int port,
                       std::chrono::milliseconds timeout = std::chrono::seconds(10));
  std::vector<std::vector<double>> embed(std::span<const std::string> texts) override;

 private:
  std::string host_;
  int port_;
  std::chrono::milliseconds timeout_;
};

/// Talks the line protocol over the stdin/stdout pipes of a child process.
class ProcessEmbeddingAdapter : public EmbeddingAdapter {
 public:
  ProcessEmbeddingAdapter(std::vector<std::string> argv,
                          std::chrono::milliseconds timeout = std::chrono::seconds(10));
  ~ProcessEmbeddingAdapter() override;
  ProcessEmbeddingAdapter(const ProcessEmbeddingAdapter&) = delete;
  ProcessEmbeddingAdapter& operator=(const ProcessEmbeddingAdapter&) = delete;

  std::vector<std::vector<double>> embed(std::span<const std::string> texts) override;

 private:
  void spawn();
  void shutdown();
  std::string read_line(std::chrono::steady_clock::time_point deadline);

  std::vector<std::string> argv_;
  std::chrono::milliseconds timeout_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
};

/// Embeds texts through an adapter. Vectors must have `model.dimension()`
/// entries (else kDimensionMismatch); they are L2-normalized here if the
/// adapter did not. Any transport failure yields kAdapterUnreachable and no
/// vectors.
std::vector<Embedding> encode_external(EmbeddingAdapter& adapter, const EncoderModel& model,
                                       std::span<const std::string> texts);

}  // namespace attentive
