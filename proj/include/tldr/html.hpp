#pragma once

// Tolerant HTML tokenizer: tags, attributes and entity-decoded text.
// Comments, doctype and script/style bodies are dropped.

#include <cctype>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace tldr::html {

struct Token {
  enum Kind { StartTag, EndTag, Text } kind = Text;
  std::string name;  // lower-case tag name
  std::vector<std::pair<std::string, std::string>> attrs;
  bool self_closing = false;
  std::string text;  // decoded, for Text

  std::string_view attr(std::string_view key) const {
    for (const auto& [k, v] : attrs) {
      if (k == key) return v;
    }
    return {};
  }
};

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x110000) {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

inline const std::unordered_map<std::string_view, char32_t>& named_entities() {
  static const std::unordered_map<std::string_view, char32_t> table = {
      {"amp", '&'},       {"lt", '<'},         {"gt", '>'},        {"quot", '"'},      {"apos", '\''},
      {"nbsp", ' '},      {"ndash", 0x2013},   {"mdash", 0x2014},  {"lsquo", 0x2018},  {"rsquo", 0x2019},
      {"ldquo", 0x201C},  {"rdquo", 0x201D},   {"hellip", 0x2026}, {"thinsp", 0x2009}, {"ensp", 0x2002},
      {"emsp", 0x2003},   {"shy", 0x00AD},     {"deg", 0x00B0},    {"plusmn", 0x00B1}, {"times", 0x00D7},
      {"micro", 0x00B5},  {"middot", 0x00B7},  {"alpha", 0x03B1},  {"beta", 0x03B2},   {"gamma", 0x03B3},
      {"delta", 0x03B4},  {"epsilon", 0x03B5}, {"kappa", 0x03BA},  {"lambda", 0x03BB}, {"mu", 0x03BC},
      {"pi", 0x03C0},     {"sigma", 0x03C3},   {"tau", 0x03C4},    {"omega", 0x03C9},  {"Delta", 0x0394},
      {"le", 0x2264},     {"ge", 0x2265},      {"minus", 0x2212},  {"prime", 0x2032},  {"copy", 0x00A9},
      {"reg", 0x00AE},    {"eacute", 0x00E9},  {"egrave", 0x00E8}, {"auml", 0x00E4},   {"ouml", 0x00F6},
      {"uuml", 0x00FC},   {"szlig", 0x00DF},   {"aacute", 0x00E1}, {"oacute", 0x00F3}, {"iacute", 0x00ED},
      {"ccedil", 0x00E7}, {"ntilde", 0x00F1}};
  return table;
}

/// Decodes character references; unknown or malformed ones stay literal.
inline std::string decode_entities(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    if (s[i] != '&') {
      out += s[i++];
      continue;
    }
    const auto semi = s.find(';', i + 1);
    if (semi == std::string_view::npos || semi - i > 32) {
      out += s[i++];
      continue;
    }
    const auto body = s.substr(i + 1, semi - i - 1);
    char32_t cp = 0;
    bool ok = false;
    if (!body.empty() && body[0] == '#') {
      const bool hex = body.size() > 1 && (body[1] == 'x' || body[1] == 'X');
      const auto digits = body.substr(hex ? 2 : 1);
      ok = !digits.empty();
      for (char c : digits) {
        const int v = std::isdigit(static_cast<unsigned char>(c))        ? c - '0'
                      : hex && std::isxdigit(static_cast<unsigned char>(c)) ? std::tolower(c) - 'a' + 10
                                                                          : -1;
        if (v < 0 || cp > 0x10FFFF) {
          ok = false;
          break;
        }
        cp = cp * (hex ? 16 : 10) + static_cast<char32_t>(v);
      }
      ok = ok && cp > 0 && cp < 0x110000;
    } else if (auto it = named_entities().find(body); it != named_entities().end()) {
      cp = it->second;
      ok = true;
    }
    if (!ok) {
      out += s[i++];
      continue;
    }
    if (cp == 0xA0) cp = ' ';
    append_utf8(out, cp);
    i = semi + 1;
  }
  return out;
}

inline bool is_void_element(std::string_view name) {
  static constexpr std::string_view kVoid[] = {"area", "base", "br",   "col",   "embed",  "hr",    "img",
                                               "input", "link", "meta", "param", "source", "track", "wbr"};
  for (auto v : kVoid) {
    if (v == name) return true;
  }
  return false;
}

inline std::vector<Token> tokenize(std::string_view html) {
  std::vector<Token> tokens;
  std::string text;
  auto flush_text = [&] {
    if (!text.empty()) {
      Token t;
      t.kind = Token::Text;
      t.text = decode_entities(text);
      tokens.push_back(std::move(t));
      text.clear();
    }
  };
  const auto is_name_char = [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == ':';
  };

  std::size_t i = 0;
  while (i < html.size()) {
    if (html[i] != '<') {
      text += html[i++];
      continue;
    }
    if (html.substr(i, 4) == "<!--") {
      const auto end = html.find("-->", i + 4);
      i = end == std::string_view::npos ? html.size() : end + 3;
      continue;
    }
    if (i + 1 < html.size() && (html[i + 1] == '!' || html[i + 1] == '?')) {
      const auto end = html.find('>', i);
      i = end == std::string_view::npos ? html.size() : end + 1;
      continue;
    }
    const bool closing = i + 1 < html.size() && html[i + 1] == '/';
    std::size_t j = i + (closing ? 2 : 1);
    const std::size_t name_start = j;
    while (j < html.size() && is_name_char(html[j])) ++j;
    if (j == name_start) {  // a bare '<'
      text += html[i++];
      continue;
    }
    flush_text();
    Token tag;
    tag.kind = closing ? Token::EndTag : Token::StartTag;
    tag.name = to_lower(html.substr(name_start, j - name_start));

    // Attributes until '>' (quoted values may contain '>').
    while (j < html.size() && html[j] != '>') {
      if (std::isspace(static_cast<unsigned char>(html[j]))) {
        ++j;
        continue;
      }
      if (html[j] == '/') {
        tag.self_closing = true;
        ++j;
        continue;
      }
      const std::size_t key_start = j;
      while (j < html.size() && !std::isspace(static_cast<unsigned char>(html[j])) && html[j] != '=' &&
             html[j] != '>' && html[j] != '/')
        ++j;
      std::string key = to_lower(html.substr(key_start, j - key_start));
      while (j < html.size() && std::isspace(static_cast<unsigned char>(html[j]))) ++j;
      std::string value;
      if (j < html.size() && html[j] == '=') {
        ++j;
        while (j < html.size() && std::isspace(static_cast<unsigned char>(html[j]))) ++j;
        if (j < html.size() && (html[j] == '"' || html[j] == '\'')) {
          const char q = html[j++];
          const auto end = html.find(q, j);
          const auto stop = end == std::string_view::npos ? html.size() : end;
          value = decode_entities(html.substr(j, stop - j));
          j = stop == html.size() ? stop : stop + 1;
        } else {
          const std::size_t v = j;
          while (j < html.size() && !std::isspace(static_cast<unsigned char>(html[j])) && html[j] != '>') ++j;
          value = decode_entities(html.substr(v, j - v));
        }
      }
      if (!key.empty()) tag.attrs.emplace_back(std::move(key), std::move(value));
    }
    i = j < html.size() ? j + 1 : j;
    if (tag.kind == Token::StartTag && (tag.name == "script" || tag.name == "style")) {
      const auto close = to_lower(html.substr(i)).find("</" + tag.name);
      if (close == std::string::npos) {
        i = html.size();
      } else {
        const auto gt = html.find('>', i + close);
        i = gt == std::string_view::npos ? html.size() : gt + 1;
      }
      continue;
    }
    tokens.push_back(std::move(tag));
  }
  flush_text();
  return tokens;
}

}  // namespace tldr::html
