#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace attentive::text {

/// Splits text into lowercase word tokens. A word is a maximal run of ASCII
/// letters, digits or non-ASCII UTF-8 bytes; apostrophes inside a word are
/// dropped ("don't" -> "dont"). Everything else separates words.
std::vector<std::string> words(std::string_view text);

/// Number of words as defined by words().
std::size_t word_count(std::string_view text);

/// Default English stopword list (lowercase, apostrophes removed).
const std::set<std::string, std::less<>>& default_stopwords();

std::string to_lower(std::string_view text);
std::string trim(std::string_view text);

/// Escapes backslash, tab, CR and newline so a field fits on one TSV line.
std::string escape_field(std::string_view raw);
/// Inverse of escape_field. Unknown escapes are kept verbatim.
std::string unescape_field(std::string_view escaped);

/// Splits on '\t' without unescaping.
std::vector<std::string_view> split_tabs(std::string_view line);

/// Splits a buffer into lines, accepting both "\n" and "\r\n".
std::vector<std::string_view> split_lines(std::string_view buffer);

/// 64-bit FNV-1a, seeded by folding the seed into the offset basis.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace attentive::text
