#pragma once

// Word, sentence, syllable and n-gram primitives shared by every metric.
// The rules are documented in data/tokenizer_rules.md; keep both in sync.

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "tldr/word_lists.hpp"

namespace tldr {

/// Half-open byte range into a UTF-8 string.
struct TextSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  std::string_view in(std::string_view text) const { return text.substr(begin, end - begin); }
  bool operator==(const TextSpan&) const = default;
};

namespace detail {

struct CodePoint {
  char32_t value;
  std::size_t offset;  // byte offset of the first unit
  std::size_t length;  // bytes
};

// Lenient decoder: malformed bytes become U+FFFD one byte at a time.
inline std::vector<CodePoint> decode_utf8(std::string_view text) {
  std::vector<CodePoint> out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const auto b0 = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    char32_t cp = 0xFFFD;
    if (b0 < 0x80) {
      cp = b0;
    } else if ((b0 >> 5) == 0x6) {
      len = 2;
      cp = b0 & 0x1F;
    } else if ((b0 >> 4) == 0xE) {
      len = 3;
      cp = b0 & 0x0F;
    } else if ((b0 >> 3) == 0x1E) {
      len = 4;
      cp = b0 & 0x07;
    } else {
      out.push_back({0xFFFD, i, 1});
      ++i;
      continue;
    }
    bool ok = i + len <= text.size();
    for (std::size_t k = 1; ok && k < len; ++k) {
      const auto b = static_cast<unsigned char>(text[i + k]);
      if ((b >> 6) != 0x2) {
        ok = false;
      } else {
        cp = (cp << 6) | (b & 0x3F);
      }
    }
    if (!ok) {
      out.push_back({0xFFFD, i, 1});
      ++i;
      continue;
    }
    out.push_back({cp, i, len});
    i += len;
  }
  return out;
}

inline bool is_ascii_alnum(char32_t c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}

inline bool is_ascii_digit(char32_t c) { return c >= '0' && c <= '9'; }

inline bool is_space(char32_t c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v' ||
         c == 0x00A0 || (c >= 0x2000 && c <= 0x200B) || c == 0x202F || c == 0x205F ||
         c == 0x3000;
}

inline bool is_word_char(char32_t c) {
  if (c < 0x80) return is_ascii_alnum(c);
  switch (c) {
    case 0x00A0: case 0x00A1: case 0x00AB: case 0x00B7: case 0x00BB:
    case 0x00BF: case 0x00D7: case 0x00F7: case 0x2212: case 0x3000:
    case 0xFEFF:
      return false;
    default:
      break;
  }
  return !(c >= 0x2000 && c <= 0x206F);
}

inline bool is_joiner(char32_t c) {
  return c == '-' || c == '\'' || c == 0x2010 || c == 0x2011 || c == 0x2019;
}

inline bool is_terminator(char32_t c) { return c == '.' || c == '?' || c == '!' || c == 0x2026; }

inline bool is_closer(char32_t c) {
  return c == '"' || c == '\'' || c == ')' || c == ']' || c == 0x2019 || c == 0x201D;
}

inline bool is_opener(char32_t c) {
  return c == '"' || c == '\'' || c == '(' || c == '[' || c == 0x2018 || c == 0x201C;
}

inline bool is_ascii_vowel(char c) {
  return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u' || c == 'y';
}

inline std::unordered_set<std::string> parse_word_list(std::string_view raw) {
  std::unordered_set<std::string> words;
  std::size_t pos = 0;
  while (pos < raw.size()) {
    auto nl = raw.find('\n', pos);
    if (nl == std::string_view::npos) nl = raw.size();
    auto line = raw.substr(pos, nl - pos);
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.remove_suffix(1);
    while (!line.empty() && line.front() == ' ') line.remove_prefix(1);
    if (!line.empty() && line.front() != '#') words.emplace(line);
    pos = nl + 1;
  }
  return words;
}

inline const std::unordered_set<std::string>& abbreviation_list() {
  static const auto list = parse_word_list(data::abbreviations);
  return list;
}

}  // namespace detail

/// ASCII lower-casing; other code points pass through unchanged.
inline std::string fold_case(std::string_view text) {
  std::string out(text);
  for (auto& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

/// Byte ranges of every word in `text`.
inline std::vector<TextSpan> word_spans(std::string_view text) {
  using namespace detail;
  const auto cps = decode_utf8(text);
  std::vector<TextSpan> spans;
  const std::size_t n = cps.size();
  std::size_t i = 0;
  while (i < n) {
    if (!is_word_char(cps[i].value)) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < n) {
      const char32_t c = cps[j].value;
      if (is_word_char(c)) {
        ++j;
        continue;
      }
      const bool has_next = j + 1 < n;
      if (has_next && is_joiner(c) && is_word_char(cps[j + 1].value)) {
        j += 2;
        continue;
      }
      if (has_next && (c == '.' || c == ',') && is_ascii_digit(cps[j - 1].value) &&
          is_ascii_digit(cps[j + 1].value)) {
        j += 2;
        continue;
      }
      break;
    }
    spans.push_back({cps[i].offset, cps[j - 1].offset + cps[j - 1].length});
    i = j;
  }
  return spans;
}

inline std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  for (const auto& span : word_spans(text)) words.emplace_back(span.in(text));
  return words;
}

inline std::size_t word_count(std::string_view text) { return word_spans(text).size(); }

/// Sentence spans. They are contiguous, cover the whole text and each holds
/// at least one word; text without words yields no sentences.
inline std::vector<TextSpan> split_sentences(std::string_view text) {
  using namespace detail;
  const auto cps = decode_utf8(text);
  const std::size_t n = cps.size();
  const auto& abbreviations = abbreviation_list();

  std::vector<TextSpan> raw;
  std::size_t start_byte = 0;
  std::size_t i = 0;
  while (i < n) {
    if (!is_terminator(cps[i].value)) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && is_terminator(cps[j].value)) ++j;
    std::size_t k = j;
    while (k < n && is_closer(cps[k].value)) ++k;
    if (k < n && !is_space(cps[k].value)) {
      i = j;
      continue;
    }
    bool boundary = true;
    if (j == i + 1 && cps[i].value == '.') {
      std::size_t t = i;
      while (t > 0 && !is_space(cps[t - 1].value)) --t;
      while (t < i && is_opener(cps[t].value)) ++t;
      const auto token = fold_case(text.substr(cps[t].offset, cps[i].offset - cps[t].offset));
      if (!token.empty() && abbreviations.count(token) > 0) boundary = false;
      std::size_t next = k;
      while (next < n && is_space(cps[next].value)) ++next;
      if (next < n && cps[next].value >= 'a' && cps[next].value <= 'z') boundary = false;
    }
    if (!boundary) {
      i = j;
      continue;
    }
    while (k < n && is_space(cps[k].value)) ++k;
    const std::size_t end_byte = k < n ? cps[k].offset : text.size();
    raw.push_back({start_byte, end_byte});
    start_byte = end_byte;
    i = k;
  }
  if (start_byte < text.size()) raw.push_back({start_byte, text.size()});

  // Merge word-less spans into a neighbour.
  const auto words = word_spans(text);
  std::vector<std::size_t> counts(raw.size(), 0);
  std::size_t w = 0;
  for (std::size_t s = 0; s < raw.size(); ++s) {
    while (w < words.size() && words[w].begin < raw[s].end) {
      ++counts[s];
      ++w;
    }
  }
  std::vector<TextSpan> merged;
  bool pending_prefix = false;
  std::size_t prefix_begin = 0;
  for (std::size_t s = 0; s < raw.size(); ++s) {
    if (counts[s] == 0) {
      if (merged.empty()) {
        if (!pending_prefix) prefix_begin = raw[s].begin;
        pending_prefix = true;
      } else {
        merged.back().end = raw[s].end;
      }
      continue;
    }
    TextSpan span = raw[s];
    if (pending_prefix) {
      span.begin = prefix_begin;
      pending_prefix = false;
    }
    merged.push_back(span);
  }
  return merged;
}

/// Vowel-group syllable estimate; never below 1.
inline int count_syllables(std::string_view word) {
  if (word.empty()) throw std::invalid_argument("count_syllables: empty word");
  const std::string w = fold_case(word);
  int groups = 0;
  bool in_group = false;
  for (char c : w) {
    const bool vowel = detail::is_ascii_vowel(c);
    if (vowel && !in_group) ++groups;
    in_group = vowel;
  }
  const std::size_t len = w.size();
  auto is_consonant = [](char c) {
    return ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z')) && !detail::is_ascii_vowel(c);
  };
  if (len >= 2 && w[len - 1] == 'e' && is_consonant(w[len - 2])) {
    const bool consonant_le = len >= 3 && w[len - 2] == 'l' && is_consonant(w[len - 3]);
    if (!consonant_le) --groups;
  }
  return groups < 1 ? 1 : groups;
}

using Ngram = std::vector<std::string>;

inline std::vector<Ngram> ngrams(std::span<const std::string> tokens, int n) {
  if (n < 1) throw std::invalid_argument("ngrams: n must be >= 1");
  std::vector<Ngram> out;
  const auto size = static_cast<std::size_t>(n);
  if (tokens.size() < size) return out;
  out.reserve(tokens.size() - size + 1);
  for (std::size_t i = 0; i + size <= tokens.size(); ++i) {
    out.emplace_back(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                     tokens.begin() + static_cast<std::ptrdiff_t>(i + size));
  }
  return out;
}

/// Case-folded n-grams joined by single spaces; the comparison form of ngrams().
inline std::vector<std::string> ngram_keys(std::span<const std::string> tokens, int n) {
  if (n < 1) throw std::invalid_argument("ngram_keys: n must be >= 1");
  std::vector<std::string> out;
  const auto size = static_cast<std::size_t>(n);
  if (tokens.size() < size) return out;
  out.reserve(tokens.size() - size + 1);
  for (std::size_t i = 0; i + size <= tokens.size(); ++i) {
    std::string key = fold_case(tokens[i]);
    for (std::size_t k = 1; k < size; ++k) {
      key += ' ';
      key += fold_case(tokens[i + k]);
    }
    out.push_back(std::move(key));
  }
  return out;
}

struct TokenizedText {
  std::vector<std::string> words;
  std::vector<TextSpan> sentences;
  std::vector<std::size_t> sentence_word_counts;  // aligned with sentences
  std::size_t char_count = 0;                      // letters and digits
  std::vector<int> syllables;                      // aligned with words
};

inline TokenizedText tokenize(std::string_view text) {
  TokenizedText out;
  const auto spans = word_spans(text);
  out.sentences = split_sentences(text);
  out.sentence_word_counts.assign(out.sentences.size(), 0);
  std::size_t s = 0;
  for (const auto& span : spans) {
    auto word = span.in(text);
    out.words.emplace_back(word);
    out.syllables.push_back(count_syllables(word));
    for (const auto& cp : detail::decode_utf8(word)) {
      if (detail::is_word_char(cp.value)) ++out.char_count;
    }
    while (s + 1 < out.sentences.size() && span.begin >= out.sentences[s].end) ++s;
    if (!out.sentences.empty()) ++out.sentence_word_counts[s];
  }
  return out;
}

}  // namespace tldr
