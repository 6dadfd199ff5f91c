#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace skillrec {

enum class CasingMode { kCased, kUncased };

std::string to_string(CasingMode mode);
CasingMode casing_mode_from_string(std::string_view s);

struct TokenizedText {
  std::string source;
  std::vector<std::string> tokens;  // lowercased in uncased mode
  std::vector<std::pair<std::size_t, std::size_t>> char_offsets;  // [start, end) into source
  CasingMode casing_mode = CasingMode::kCased;

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }

  // Source substring covering tokens [begin, end).
  std::string detokenize(std::size_t begin, std::size_t end) const;
};

// Splits on Unicode whitespace, then peels leading and trailing punctuation
// off each chunk into single-character tokens. Inner punctuation ("k-means",
// "c++") stays attached.
TokenizedText tokenize(std::string_view text, CasingMode mode = CasingMode::kCased);

std::string to_lower_ascii(std::string_view s);

}  // namespace skillrec
