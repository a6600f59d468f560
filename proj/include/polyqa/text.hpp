#pragma once

// Unicode helpers shared by tokenization, answer matching and metrics.

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/locid.h>
#include <unicode/utf8.h>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "polyqa/error.hpp"

namespace polyqa::text {

// One decoded code point and the byte range it occupies.
struct CodePoint {
  char32_t value;
  std::size_t offset;
  std::size_t length;
};

// Invalid byte sequences decode to U+FFFD spanning the offending byte(s).
inline std::vector<CodePoint> decode_utf8(std::string_view s) {
  std::vector<CodePoint> out;
  out.reserve(s.size());
  const auto* bytes = reinterpret_cast<const uint8_t*>(s.data());
  const int32_t length = static_cast<int32_t>(s.size());
  int32_t i = 0;
  while (i < length) {
    const int32_t start = i;
    UChar32 c;
    U8_NEXT(bytes, i, length, c);
    if (c < 0) c = 0xFFFD;
    out.push_back({static_cast<char32_t>(c), static_cast<std::size_t>(start),
                   static_cast<std::size_t>(i - start)});
  }
  return out;
}

inline bool is_space(char32_t c) { return u_isUWhiteSpace(static_cast<UChar32>(c)); }

inline bool is_ascii_punct(char c) {
  const auto u = static_cast<unsigned char>(c);
  return (u >= 0x21 && u <= 0x2F) || (u >= 0x3A && u <= 0x40) ||
         (u >= 0x5B && u <= 0x60) || (u >= 0x7B && u <= 0x7E);
}

inline std::string to_utf8(const icu::UnicodeString& u) {
  std::string out;
  u.toUTF8String(out);
  return out;
}

inline std::string nfkc(std::string_view s) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* normalizer = icu::Normalizer2::getNFKCInstance(status);
  if (U_FAILURE(status)) throw DataError("ICU NFKC normalizer unavailable");
  const icu::UnicodeString input =
      icu::UnicodeString::fromUTF8(icu::StringPiece(s.data(), static_cast<int32_t>(s.size())));
  icu::UnicodeString result = normalizer->normalize(input, status);
  if (U_FAILURE(status)) throw DataError("NFKC normalization failed");
  return to_utf8(result);
}

inline std::string lowercase(std::string_view s) {
  icu::UnicodeString u =
      icu::UnicodeString::fromUTF8(icu::StringPiece(s.data(), static_cast<int32_t>(s.size())));
  u.toLower(icu::Locale::getRoot());
  return to_utf8(u);
}

// Removes leading and trailing Unicode whitespace.
inline std::string trim(std::string_view s) {
  const auto cps = decode_utf8(s);
  std::size_t first = 0;
  std::size_t last = cps.size();
  while (first < last && is_space(cps[first].value)) ++first;
  while (last > first && is_space(cps[last - 1].value)) --last;
  if (first == last) return {};
  const std::size_t begin = cps[first].offset;
  const std::size_t end = cps[last - 1].offset + cps[last - 1].length;
  return std::string(s.substr(begin, end - begin));
}

// Runs of Unicode whitespace become one ASCII space; ends are trimmed.
inline std::string collapse_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (const auto& cp : decode_utf8(s)) {
    if (is_space(cp.value)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.append(s.substr(cp.offset, cp.length));
  }
  return out;
}

// NFKC, lowercase, whitespace trim and collapse, then strip ASCII punctuation
// (and any whitespace it exposes) from both ends.
inline std::string normalize_answer(std::string_view s) {
  std::string t = collapse_whitespace(lowercase(nfkc(s)));
  for (;;) {
    std::size_t begin = 0;
    std::size_t end = t.size();
    while (begin < end && (is_ascii_punct(t[begin]) || t[begin] == ' ')) ++begin;
    while (end > begin && (is_ascii_punct(t[end - 1]) || t[end - 1] == ' ')) --end;
    if (begin == 0 && end == t.size()) break;
    t = t.substr(begin, end - begin);
  }
  return t;
}

// Languages written without spaces between words are tokenized per character.
inline bool is_unspaced_language(std::string_view lang) {
  return lang == "ja" || lang == "zh" || lang.starts_with("zh-") || lang.starts_with("zh_") ||
         lang == "th" || lang == "km";
}

// Case-insensitive substring test used for title markers.
inline bool contains_case_insensitive(std::string_view haystack, std::string_view needle) {
  if (needle.empty()) return true;
  return lowercase(haystack).find(lowercase(needle)) != std::string::npos;
}

// 64-bit FNV-1a; stable across platforms, used for hashing tokens to buckets.
inline uint64_t fnv1a64(std::string_view s, uint64_t seed = 0xcbf29ce484222325ULL) {
  uint64_t h = seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace polyqa::text
