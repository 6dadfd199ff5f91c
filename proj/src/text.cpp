#include "skillrec/text.hpp"

#include <cctype>

#include "skillrec/error.hpp"

namespace skillrec {

namespace {

// Decodes one UTF-8 code point at `pos`; returns its byte length. Invalid
// sequences decode as a single byte.
std::size_t decode_utf8(std::string_view s, std::size_t pos, char32_t& cp) {
  const auto b0 = static_cast<unsigned char>(s[pos]);
  auto cont = [&](std::size_t i) {
    return pos + i < s.size() && (static_cast<unsigned char>(s[pos + i]) & 0xC0) == 0x80;
  };
  if (b0 < 0x80) {
    cp = b0;
    return 1;
  }
  if ((b0 & 0xE0) == 0xC0 && cont(1)) {
    cp = ((b0 & 0x1F) << 6) | (static_cast<unsigned char>(s[pos + 1]) & 0x3F);
    return 2;
  }
  if ((b0 & 0xF0) == 0xE0 && cont(1) && cont(2)) {
    cp = ((b0 & 0x0F) << 12) | ((static_cast<unsigned char>(s[pos + 1]) & 0x3F) << 6) |
         (static_cast<unsigned char>(s[pos + 2]) & 0x3F);
    return 3;
  }
  if ((b0 & 0xF8) == 0xF0 && cont(1) && cont(2) && cont(3)) {
    cp = ((b0 & 0x07) << 18) | ((static_cast<unsigned char>(s[pos + 1]) & 0x3F) << 12) |
         ((static_cast<unsigned char>(s[pos + 2]) & 0x3F) << 6) |
         (static_cast<unsigned char>(s[pos + 3]) & 0x3F);
    return 4;
  }
  cp = b0;
  return 1;
}

bool is_unicode_space(char32_t cp) {
  switch (cp) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

bool is_edge_punct(char c) {
  switch (c) {
    case '.': case ',': case ';': case ':': case '!': case '?': case '(': case ')':
    case '[': case ']': case '{': case '}': case '"': case '\'':
      return true;
    default:
      return false;
  }
}

}  // namespace

std::string to_string(CasingMode mode) {
  return mode == CasingMode::kCased ? "cased" : "uncased";
}

CasingMode casing_mode_from_string(std::string_view s) {
  if (s == "cased") return CasingMode::kCased;
  if (s == "uncased") return CasingMode::kUncased;
  throw ValidationError("unknown casing mode: " + std::string(s));
}

std::string to_lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string TokenizedText::detokenize(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > char_offsets.size()) return {};
  const auto from = char_offsets[begin].first;
  const auto to = char_offsets[end - 1].second;
  return source.substr(from, to - from);
}

TokenizedText tokenize(std::string_view text, CasingMode mode) {
  TokenizedText out;
  out.source = std::string(text);
  out.casing_mode = mode;

  auto emit = [&](std::size_t from, std::size_t to) {
    std::string tok = out.source.substr(from, to - from);
    if (mode == CasingMode::kUncased) tok = to_lower_ascii(tok);
    out.tokens.push_back(std::move(tok));
    out.char_offsets.emplace_back(from, to);
  };

  auto emit_chunk = [&](std::size_t from, std::size_t to) {
    std::size_t lo = from;
    std::size_t hi = to;
    while (lo < hi && is_edge_punct(text[lo])) {
      emit(lo, lo + 1);
      ++lo;
    }
    std::size_t trail = hi;
    while (trail > lo && is_edge_punct(text[trail - 1])) --trail;
    if (lo < trail) emit(lo, trail);
    for (std::size_t i = trail; i < hi; ++i) emit(i, i + 1);
  };

  std::size_t pos = 0;
  std::size_t chunk_start = std::string_view::npos;
  while (pos < text.size()) {
    char32_t cp;
    const std::size_t len = decode_utf8(text, pos, cp);
    if (is_unicode_space(cp)) {
      if (chunk_start != std::string_view::npos) {
        emit_chunk(chunk_start, pos);
        chunk_start = std::string_view::npos;
      }
    } else if (chunk_start == std::string_view::npos) {
      chunk_start = pos;
    }
    pos += len;
  }
  if (chunk_start != std::string_view::npos) emit_chunk(chunk_start, text.size());
  return out;
}

}  // namespace skillrec
