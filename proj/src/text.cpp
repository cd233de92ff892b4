#include "attentive/text.hpp"

#include <fstream>
#include <sstream>

#include "attentive/error.hpp"

namespace attentive {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::kParseError: return "ParseError";
    case Errc::kValidationError: return "ValidationError";
    case Errc::kInvalidArgument: return "InvalidArgument";
    case Errc::kInvalidAgenda: return "InvalidAgenda";
    case Errc::kSessionDone: return "SessionDone";
    case Errc::kNoPendingQuestion: return "NoPendingQuestion";
    case Errc::kTimestampRegression: return "TimestampRegression";
    case Errc::kEmptyInput: return "EmptyInput";
    case Errc::kTooFewDocuments: return "TooFewDocuments";
    case Errc::kDegenerateVocabulary: return "DegenerateVocabulary";
    case Errc::kUnknownIntent: return "UnknownIntent";
    case Errc::kEmptyCluster: return "EmptyCluster";
    case Errc::kFractionOutOfRange: return "FractionOutOfRange";
    case Errc::kMalformedRow: return "MalformedRow";
    case Errc::kUnknownLabel: return "UnknownLabel";
    case Errc::kEmptyCorpus: return "EmptyCorpus";
    case Errc::kAdapterUnreachable: return "AdapterUnreachable";
    case Errc::kDimensionMismatch: return "DimensionMismatch";
    case Errc::kSingleClassDataset: return "SingleClassDataset";
    case Errc::kNonfiniteLoss: return "NonfiniteLoss";
    case Errc::kFingerprintMismatch: return "FingerprintMismatch";
    case Errc::kTooFewPerClass: return "TooFewPerClass";
    case Errc::kNoTemplates: return "NoTemplates";
    case Errc::kUnknownTopic: return "UnknownTopic";
    case Errc::kTopicMismatch: return "TopicMismatch";
    case Errc::kEmptyCoding: return "EmptyCoding";
    case Errc::kEmptyTranscript: return "EmptyTranscript";
    case Errc::kMissingRating: return "MissingRating";
    case Errc::kUnknownAgenda: return "UnknownAgenda";
    case Errc::kUnknownSession: return "UnknownSession";
    case Errc::kEmptyMessage: return "EmptyMessage";
    case Errc::kScoreOutOfRange: return "ScoreOutOfRange";
    case Errc::kTopicNotYetAsked: return "TopicNotYetAsked";
    case Errc::kVersionMismatch: return "VersionMismatch";
    case Errc::kIoError: return "IoError";
    case Errc::kCorruptLog: return "CorruptLog";
  }
  return "Unknown";
}

namespace text {
namespace {

bool is_word_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
         (c >= '0' && c <= '9') || c >= 0x80;
}

// U+2019 RIGHT SINGLE QUOTATION MARK, the usual typographic apostrophe.
constexpr std::string_view kCurlyApostrophe = "\xE2\x80\x99";

}  // namespace

std::vector<std::string> words(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    const bool apostrophe = c == '\'';
    const bool curly = text.substr(i, 3) == kCurlyApostrophe;
    if ((apostrophe || curly) && !current.empty() && i + (curly ? 3 : 1) < text.size() &&
        is_word_byte(static_cast<unsigned char>(text[i + (curly ? 3 : 1)]))) {
      if (curly) i += 2;
      continue;
    }
    if (curly) {
      // A closing quote, not an apostrophe inside a word.
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
      i += 2;
      continue;
    }
    if (is_word_byte(c)) {
      current.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a')
                                             : static_cast<char>(c));
    } else if (!current.empty()) {
      out.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

std::size_t word_count(std::string_view text) { return words(text).size(); }

const std::set<std::string, std::less<>>& default_stopwords() {
  static const std::set<std::string, std::less<>> kStopwords{
      "a", "about", "above", "after", "again", "against", "all", "also", "am", "an", "and",
      "any", "are", "arent", "as", "at", "be", "because", "been", "before", "being", "below",
      "between", "both", "but", "by", "can", "cant", "cannot", "could", "couldnt", "did",
      "didnt", "do", "does", "doesnt", "doing", "dont", "down", "during", "each", "even",
      "ever", "few", "for", "from", "further", "get", "gets", "got", "had", "hadnt", "has",
      "hasnt", "have", "havent", "having", "he", "hed", "hell", "her", "here", "heres", "hers",
      "herself", "hes", "him", "himself", "his", "how", "hows", "i", "id", "if", "ill", "im",
      "in", "into", "is", "isnt", "it", "its", "itself", "ive", "just", "like", "lets", "me",
      "more", "most", "much", "must", "mustnt", "my", "myself", "no", "nor", "not", "now", "of",
      "off", "on", "once", "only", "or", "other", "ought", "our", "ours", "ourselves", "out",
      "over", "own", "quite", "rather", "really", "same", "shall", "shant", "she", "shed",
      "shell", "shes", "should", "shouldnt", "since", "so", "some", "such", "than", "that",
      "thats", "the", "their", "theirs", "them", "themselves", "then", "there", "theres",
      "these", "they", "theyd", "theyll", "theyre", "theyve", "this", "those", "though",
      "through", "to", "too", "under", "until", "up", "us", "very", "was", "wasnt", "we",
      "wed", "well", "were", "werent", "weve", "what", "whats", "when", "whens", "where",
      "wheres", "which", "while", "who", "whom", "whos", "why", "whys", "will", "with", "wont",
      "would", "wouldnt", "yet", "you", "youd", "youll", "your", "youre", "yours", "yourself",
      "yourselves", "youve"};
  return kStopwords;
}

std::string to_lower(std::string_view text) {
  std::string out(text);
  for (auto& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::string trim(std::string_view text) {
  const auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
  };
  std::size_t begin = 0;
  std::size_t end = text.size();
  while (begin < end && is_space(text[begin])) ++begin;
  while (end > begin && is_space(text[end - 1])) --end;
  return std::string(text.substr(begin, end - begin));
}

std::string escape_field(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (char c : raw) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string unescape_field(std::string_view escaped) {
  std::string out;
  out.reserve(escaped.size());
  for (std::size_t i = 0; i < escaped.size(); ++i) {
    if (escaped[i] != '\\' || i + 1 == escaped.size()) {
      out.push_back(escaped[i]);
      continue;
    }
    switch (escaped[i + 1]) {
      case '\\': out.push_back('\\'); break;
      case 't': out.push_back('\t'); break;
      case 'n': out.push_back('\n'); break;
      case 'r': out.push_back('\r'); break;
      default:
        out.push_back('\\');
        out.push_back(escaped[i + 1]);
    }
    ++i;
  }
  return out;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

std::vector<std::string_view> split_lines(std::string_view buffer) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < buffer.size()) {
    auto nl = buffer.find('\n', start);
    if (nl == std::string_view::npos) nl = buffer.size();
    auto line = buffer.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = nl + 1;
  }
  return lines;
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t hash = 14695981039346656037ULL ^ (seed * 0x9E3779B97F4A7C15ULL);
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  return hash;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIoError, "cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::kIoError, "cannot write " + path);
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw Error(Errc::kIoError, "short write to " + path);
}

}  // namespace text
}  // namespace attentive
