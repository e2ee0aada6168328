#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "scmine/error.hpp"

// String-literal-aware partition of Solidity source into code and comments,
// plus extraction of declaration identifiers. Lexing is total: malformed
// input degrades to code spans, an unterminated block comment runs to end of
// input, and an unterminated string literal ends at the line break.

namespace scmine::extract {

enum class SpanKind { Code, LineComment, BlockComment, StringLiteral };

struct Span {
  std::size_t begin = 0;  // byte offset, inclusive
  std::size_t end = 0;    // byte offset, exclusive
  SpanKind kind = SpanKind::Code;

  bool operator==(const Span&) const = default;
};

enum class FeatureMode { FullCode, OnlyCode, OnlyComments, ExtractedFeatures };

inline const char* to_string(FeatureMode m) {
  switch (m) {
    case FeatureMode::FullCode: return "fc";
    case FeatureMode::OnlyCode: return "oc";
    case FeatureMode::OnlyComments: return "ocom";
    case FeatureMode::ExtractedFeatures: return "ef";
  }
  return "fc";
}

inline FeatureMode mode_from_string(std::string_view s) {
  if (s == "fc") return FeatureMode::FullCode;
  if (s == "oc") return FeatureMode::OnlyCode;
  if (s == "ocom") return FeatureMode::OnlyComments;
  if (s == "ef") return FeatureMode::ExtractedFeatures;
  throw Error("unknown feature mode '" + std::string(s) + "' (expected fc|oc|ocom|ef)");
}

inline constexpr std::array<FeatureMode, 4> kAllModes = {
    FeatureMode::FullCode, FeatureMode::OnlyCode, FeatureMode::OnlyComments,
    FeatureMode::ExtractedFeatures};

struct ExtractionResult {
  std::string full_code;
  std::string only_code;  // code + string-literal bytes, comments removed
  std::string comments;   // trimmed comment chunks joined with '\n'
  std::string identifiers;  // space-joined declaration names, source order
};

// Partition `source` into disjoint, sorted spans covering every byte.
// Comment openers inside string literals are not comments; `\"`, `\'` and
// `\\` escapes are honored. Line comments end before the newline (which
// stays code); the first `*/` closes a block comment (Solidity does not
// nest them).
inline std::vector<Span> lex(std::string_view source) {
  std::vector<Span> spans;
  const std::size_t n = source.size();
  std::size_t i = 0;
  std::size_t code_start = 0;

  auto flush_code = [&](std::size_t upto) {
    if (upto > code_start) spans.push_back({code_start, upto, SpanKind::Code});
  };

  while (i < n) {
    const char c = source[i];
    if (c == '/' && i + 1 < n && source[i + 1] == '/') {
      flush_code(i);
      std::size_t j = i + 2;
      while (j < n && source[j] != '\n') ++j;
      spans.push_back({i, j, SpanKind::LineComment});
      i = code_start = j;
    } else if (c == '/' && i + 1 < n && source[i + 1] == '*') {
      flush_code(i);
      std::size_t j = source.find("*/", i + 2);
      std::size_t end = (j == std::string_view::npos) ? n : j + 2;
      spans.push_back({i, end, SpanKind::BlockComment});
      i = code_start = end;
    } else if (c == '"' || c == '\'') {
      flush_code(i);
      std::size_t j = i + 1;
      while (j < n) {
        if (source[j] == '\\' && j + 1 < n) {
          j += 2;
        } else if (source[j] == c) {
          ++j;
          break;
        } else if (source[j] == '\n') {
          break;  // unterminated literal ends at the line break
        } else {
          ++j;
        }
      }
      spans.push_back({i, j, SpanKind::StringLiteral});
      i = code_start = j;
    } else {
      ++i;
    }
  }
  flush_code(n);
  return spans;
}

namespace detail {

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

inline std::string_view trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return s.substr(b, e - b);
}

// Comment text with delimiters removed: `//` prefix for line comments,
// `/*` and a closing `*/` (when present) for block comments.
inline std::string_view comment_interior(std::string_view source, const Span& span) {
  std::string_view text = source.substr(span.begin, span.end - span.begin);
  if (span.kind == SpanKind::LineComment) return text.substr(2);
  text = text.substr(2);
  if (text.size() >= 2 && text.substr(text.size() - 2) == "*/")
    text = text.substr(0, text.size() - 2);
  return text;
}

inline bool is_identifier_start(char c) {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_' || c == '$';
}

inline bool is_identifier_char(char c) {
  return is_identifier_start(c) || (c >= '0' && c <= '9');
}

}  // namespace detail

// Code/comment split per the recorded spans. only_code concatenates code and
// string-literal bytes; comments concatenates trimmed comment interiors
// joined by single newlines, skipping chunks that trim to nothing.
inline ExtractionResult split(std::string_view source) {
  ExtractionResult r;
  r.full_code.assign(source);
  for (const Span& span : lex(source)) {
    if (span.kind == SpanKind::Code || span.kind == SpanKind::StringLiteral) {
      r.only_code.append(source.substr(span.begin, span.end - span.begin));
    } else {
      std::string_view chunk = detail::trim(detail::comment_interior(source, span));
      if (chunk.empty()) continue;
      if (!r.comments.empty()) r.comments += '\n';
      r.comments.append(chunk);
    }
  }
  return r;
}

// Names immediately following `contract`, `function`, `event`, `interface`
// or `library` in code spans (comments and string literals excluded), in
// source order, space-joined. Anonymous declarations contribute nothing.
inline std::string extract_identifiers(std::string_view source) {
  static constexpr std::string_view kKeywords[] = {"contract", "function", "event",
                                                   "interface", "library"};
  auto is_keyword = [](std::string_view t) {
    for (auto k : kKeywords)
      if (t == k) return true;
    return false;
  };

  // Full token stream (identifiers, numbers, punctuation) from code spans
  // only, so `function()` has `(` as its successor and stays anonymous. A
  // comment between keyword and name is transparent because spans are
  // scanned in order and whitespace never forms a token.
  std::vector<std::string_view> tokens;
  std::vector<bool> is_ident;
  for (const Span& span : lex(source)) {
    if (span.kind != SpanKind::Code) continue;
    std::string_view text = source.substr(span.begin, span.end - span.begin);
    std::size_t i = 0;
    while (i < text.size()) {
      const char c = text[i];
      if (detail::is_identifier_start(c)) {
        std::size_t j = i + 1;
        while (j < text.size() && detail::is_identifier_char(text[j])) ++j;
        tokens.push_back(text.substr(i, j - i));
        is_ident.push_back(true);
        i = j;
      } else if (c >= '0' && c <= '9') {
        std::size_t j = i + 1;
        while (j < text.size() && detail::is_identifier_char(text[j])) ++j;
        tokens.push_back(text.substr(i, j - i));
        is_ident.push_back(false);
        i = j;
      } else if (detail::is_space(c)) {
        ++i;
      } else {
        tokens.push_back(text.substr(i, 1));
        is_ident.push_back(false);
        ++i;
      }
    }
  }

  std::string out;
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    if (!is_ident[i] || !is_keyword(tokens[i])) continue;
    if (!is_ident[i + 1] || is_keyword(tokens[i + 1])) continue;
    if (!out.empty()) out += ' ';
    out.append(tokens[i + 1]);
    ++i;  // the name cannot itself trigger a declaration
  }
  return out;
}

inline std::string render(std::string_view source, FeatureMode mode) {
  switch (mode) {
    case FeatureMode::FullCode: return std::string(source);
    case FeatureMode::OnlyCode: return split(source).only_code;
    case FeatureMode::OnlyComments: return split(source).comments;
    case FeatureMode::ExtractedFeatures: return extract_identifiers(source);
  }
  return std::string(source);
}

// All four views in one pass.
inline ExtractionResult extract(std::string_view source) {
  ExtractionResult r = split(source);
  r.identifiers = extract_identifiers(source);
  return r;
}

}  // namespace scmine::extract
