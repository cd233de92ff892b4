#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace attentive {

enum class Errc {
  kParseError,
  kValidationError,
  kInvalidArgument,
  kInvalidAgenda,
  kSessionDone,
  kNoPendingQuestion,
  kTimestampRegression,
  kEmptyInput,
  kTooFewDocuments,
  kDegenerateVocabulary,
  kUnknownIntent,
  kEmptyCluster,
  kFractionOutOfRange,
  kMalformedRow,
  kUnknownLabel,
  kEmptyCorpus,
  kAdapterUnreachable,
  kDimensionMismatch,
  kSingleClassDataset,
  kNonfiniteLoss,
  kFingerprintMismatch,
  kTooFewPerClass,
  kNoTemplates,
  kUnknownTopic,
  kTopicMismatch,
  kEmptyCoding,
  kEmptyTranscript,
  kMissingRating,
  kUnknownAgenda,
  kUnknownSession,
  kEmptyMessage,
  kScoreOutOfRange,
  kTopicNotYetAsked,
  kVersionMismatch,
  kIoError,
  kCorruptLog,
};

/// Stable identifier for an error code, e.g. "UnknownSession". Used on the wire.
std::string_view errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// Malformed input file. Line and column are 1-based; 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t line, std::size_t column)
      : Error(Errc::kParseError, format(message, line, column)),
        line_(line),
        column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  static std::string format(const std::string& message, std::size_t line,
                            std::size_t column) {
    if (line == 0) return message;
    return "line " + std::to_string(line) + ", column " +
           std::to_string(column) + ": " + message;
  }

  std::size_t line_;
  std::size_t column_;
};

/// Bad record in a line-oriented data file (1-based line number).
class RowError : public Error {
 public:
  RowError(Errc code, const std::string& message, std::size_t line)
      : Error(code, "line " + std::to_string(line) + ": " + message), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace attentive
