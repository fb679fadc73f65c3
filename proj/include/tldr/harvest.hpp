#pragma once

// Annotated-bibliography harvesting: reference-list parsing with trailing
// bold annotations, DOI extraction and metadata-service resolution, and
// assembly of abstract-summary pairs.

#include <algorithm>
#include <chrono>
#include <fstream>
#include <mutex>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "tldr/corpus.hpp"
#include "tldr/html.hpp"
#include "tldr/llmclient.hpp"
#include "tldr/tokenize.hpp"

namespace tldr {

inline constexpr std::size_t kMinAnnotationWords = 4;

struct BibliographyEntry {
  std::string citation_text;
  std::optional<std::string> annotation_text;
  std::optional<std::string> scholar_link;
  std::optional<std::string> embedded_doi;

  bool operator==(const BibliographyEntry&) const = default;
};

inline bool is_valid_doi(std::string_view doi) {
  static const std::regex pattern(R"(^10\.\d{4,9}/\S+$)");
  return std::regex_match(doi.begin(), doi.end(), pattern);
}

/// Lower-cased, with any resolver prefix removed.
inline std::string normalize_doi(std::string_view doi) {
  auto s = html::to_lower(detail::trim(doi));
  for (std::string_view prefix : {"https://doi.org/", "http://doi.org/", "https://dx.doi.org/", "http://dx.doi.org/",
                                  "doi.org/", "doi:"}) {
    if (s.starts_with(prefix)) {
      s.erase(0, prefix.size());
      break;
    }
  }
  return std::string(detail::trim(s));
}

inline std::string url_decode(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%' && i + 2 < s.size() && std::isxdigit(static_cast<unsigned char>(s[i + 1])) &&
        std::isxdigit(static_cast<unsigned char>(s[i + 2]))) {
      out += static_cast<char>(std::stoi(std::string(s.substr(i + 1, 2)), nullptr, 16));
      i += 2;
    } else {
      out += s[i];
    }
  }
  return out;
}

inline std::string url_encode(std::string_view s) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out += static_cast<char>(c);
    } else {
      out += '%';
      out += kHex[c >> 4];
      out += kHex[c & 15];
    }
  }
  return out;
}

/// DOI carried by a doi.org link or by the doi= parameter of a scholar link.
inline std::optional<std::string> doi_from_link(std::string_view href) {
  std::string candidate;
  const auto lower = html::to_lower(href);
  if (auto p = lower.find("doi.org/"); p != std::string::npos) {
    candidate = url_decode(href.substr(p + 8));
    if (auto q = candidate.find_first_of("?#"); q != std::string::npos) candidate.resize(q);
  } else if (lower.find("scholar") != std::string::npos) {
    for (std::string_view key : {"?doi=", "&doi="}) {
      if (auto p = lower.find(key); p != std::string::npos) {
        auto value = href.substr(p + key.size());
        value = value.substr(0, value.find('&'));
        candidate = url_decode(value);
        break;
      }
    }
  }
  if (candidate.empty() || !is_valid_doi(candidate)) return std::nullopt;
  return candidate;
}

namespace detail {

inline std::string collapse_spaces(std::string_view s) {
  std::string out;
  bool pending = false;
  for (char c : s) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f') {
      pending = !out.empty();
    } else {
      if (pending) out += ' ';
      pending = false;
      out += c;
    }
  }
  return out;
}

inline bool contains_ci(std::string_view hay, std::string_view needle) {
  return html::to_lower(hay).find(needle) != std::string::npos;
}

inline bool bold_style(std::string_view style) {
  auto s = html::to_lower(style);
  s.erase(std::remove(s.begin(), s.end(), ' '), s.end());
  return s.find("font-weight:bold") != std::string::npos || s.find("font-weight:700") != std::string::npos ||
         s.find("font-weight:800") != std::string::npos || s.find("font-weight:900") != std::string::npos ||
         s.find("font-weight:bolder") != std::string::npos;
}

struct TextRun {
  std::string text;
  bool bold = false;
};

inline bool blank(std::string_view s) { return trim(s).empty(); }

inline BibliographyEntry finish_entry(const std::vector<TextRun>& runs, const std::vector<std::string>& hrefs) {
  BibliographyEntry e;
  // Trailing bold: bold runs at the very end, merged across whitespace.
  std::size_t start = runs.size();
  bool any_bold = false;
  for (std::size_t i = runs.size(); i > 0; --i) {
    const auto& r = runs[i - 1];
    if (r.bold && !blank(r.text)) {
      start = i - 1;
      any_bold = true;
    } else if (!blank(r.text)) {
      break;
    }
  }
  std::string head, tail;
  for (std::size_t i = 0; i < runs.size(); ++i) (any_bold && i >= start ? tail : head) += runs[i].text;
  if (any_bold && word_count(tail) >= kMinAnnotationWords) {
    e.annotation_text = collapse_spaces(tail);
    e.citation_text = collapse_spaces(head);
  } else {
    e.citation_text = collapse_spaces(head + tail);
  }
  for (const auto& href : hrefs) {
    const auto lower = html::to_lower(href);
    if (!e.scholar_link && lower.find("scholar") != std::string::npos) e.scholar_link = href;
  }
  for (bool prefer_doi_org : {true, false}) {
    for (const auto& href : hrefs) {
      if (e.embedded_doi) break;
      if ((html::to_lower(href).find("doi.org/") != std::string::npos) != prefer_doi_org) continue;
      e.embedded_doi = doi_from_link(href);
    }
  }
  return e;
}

}  // namespace detail

/// One entry per item of every list whose class or id mentions
/// "reference". Text inside elements whose class mentions "links", and
/// the text of doi.org/scholar anchors, is not part of the citation.
inline std::vector<BibliographyEntry> parse_annotated_bibliography(std::string_view page,
                                                                   std::vector<std::string>* diagnostics = nullptr) {
  struct Frame {
    std::string name;
    bool bold = false;
    bool hidden = false;
    bool ref_list = false;
    bool entry = false;
  };
  std::vector<BibliographyEntry> entries;
  std::vector<Frame> stack;
  std::vector<detail::TextRun> runs;
  std::vector<std::string> hrefs;
  bool in_entry = false;
  int lists_found = 0;

  const auto in_ref_list = [&] {
    return std::any_of(stack.begin(), stack.end(), [](const Frame& f) { return f.ref_list; });
  };
  const auto pop = [&] {
    if (stack.back().entry) {
      auto e = detail::finish_entry(runs, hrefs);
      if (!e.citation_text.empty() || e.annotation_text) entries.push_back(std::move(e));
      runs.clear();
      hrefs.clear();
      in_entry = false;
    }
    stack.pop_back();
  };
  const auto separator = [&] {
    if (in_entry) runs.push_back({" ", false});
  };

  for (const auto& tok : html::tokenize(page)) {
    if (tok.kind == html::Token::Text) {
      const bool hidden = !stack.empty() && stack.back().hidden;
      if (in_entry && !hidden) runs.push_back({tok.text, !stack.empty() && stack.back().bold});
      continue;
    }
    if (tok.kind == html::Token::EndTag) {
      auto it = std::find_if(stack.rbegin(), stack.rend(), [&](const Frame& f) { return f.name == tok.name; });
      if (it == stack.rend()) continue;
      const auto depth = static_cast<std::size_t>(stack.rend() - it) - 1;
      while (stack.size() > depth) pop();
      if (tok.name == "p" || tok.name == "div" || tok.name == "li") separator();
      continue;
    }
    // Start tag.
    if (tok.name == "br") {
      separator();
      continue;
    }
    if (html::is_void_element(tok.name)) continue;
    if (tok.name == "li") {
      auto it = std::find_if(stack.rbegin(), stack.rend(),
                             [](const Frame& f) { return f.name == "li" || f.name == "ol" || f.name == "ul"; });
      if (it != stack.rend() && it->name == "li") {
        const auto depth = static_cast<std::size_t>(stack.rend() - it) - 1;
        while (stack.size() > depth) pop();
      }
    } else if (tok.name == "p" && !stack.empty() && stack.back().name == "p") {
      pop();
    }
    if (tok.name == "p" || tok.name == "div" || tok.name == "li") separator();

    Frame f;
    f.name = tok.name;
    const Frame* parent = stack.empty() ? nullptr : &stack.back();
    f.bold = (parent && parent->bold) || tok.name == "b" || tok.name == "strong" || detail::bold_style(tok.attr("style"));
    f.hidden = (parent && parent->hidden) || detail::contains_ci(tok.attr("class"), "links");
    if (tok.name == "a") {
      const std::string href(tok.attr("href"));
      const auto lower = html::to_lower(href);
      if (in_entry && !href.empty()) hrefs.push_back(href);
      if (lower.find("doi.org/") != std::string::npos || lower.find("scholar") != std::string::npos) f.hidden = true;
    }
    if ((tok.name == "ol" || tok.name == "ul") && !in_ref_list() &&
        (detail::contains_ci(tok.attr("class"), "reference") || detail::contains_ci(tok.attr("id"), "reference"))) {
      f.ref_list = true;
      ++lists_found;
    }
    if (tok.name == "li" && parent && parent->ref_list) {
      f.entry = true;
      in_entry = true;
    }
    if (tok.self_closing) continue;
    stack.push_back(std::move(f));
  }
  while (!stack.empty()) pop();
  if (diagnostics && lists_found == 0) diagnostics->push_back("no reference list found");
  return entries;
}

/// The page's own DOI from citation_doi / dc.identifier meta tags.
inline std::optional<std::string> page_doi(std::string_view page) {
  for (const auto& tok : html::tokenize(page)) {
    if (tok.kind != html::Token::StartTag || tok.name != "meta") continue;
    const auto name = html::to_lower(tok.attr("name"));
    if (name == "citation_doi" || name == "dc.identifier" || name == "prism.doi") {
      auto doi = normalize_doi(tok.attr("content"));
      if (is_valid_doi(doi)) return doi;
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// DOI resolution

/// Spaces requests at least 1 / rate seconds apart; safe to share.
class RateLimiter {
 public:
  RateLimiter(double requests_per_second, MonotonicClock clock, Sleeper sleeper)
      : interval_(std::chrono::duration_cast<std::chrono::steady_clock::duration>(
            std::chrono::duration<double>(1.0 / requests_per_second))),
        clock_(std::move(clock)),
        sleeper_(std::move(sleeper)) {
    if (!(requests_per_second > 0)) throw std::invalid_argument("rate must be positive");
  }

  void acquire() {
    std::chrono::steady_clock::time_point slot;
    {
      std::lock_guard lock(mu_);
      const auto now = clock_();
      slot = started_ ? std::max(now, next_) : now;
      next_ = slot + interval_;
      started_ = true;
    }
    const auto now = clock_();
    if (slot > now) sleeper_(std::chrono::ceil<std::chrono::milliseconds>(slot - now));
  }

 private:
  std::chrono::steady_clock::duration interval_;
  MonotonicClock clock_;
  Sleeper sleeper_;
  std::mutex mu_;
  std::chrono::steady_clock::time_point next_{};
  bool started_ = false;
};

enum class ResolutionMethod { EmbeddedLink, MetadataQuery, Failed };

inline std::string_view resolution_method_name(ResolutionMethod m) {
  switch (m) {
    case ResolutionMethod::EmbeddedLink: return "embedded_link";
    case ResolutionMethod::MetadataQuery: return "metadata_query";
    case ResolutionMethod::Failed: return "failed";
  }
  return "";
}

struct DoiResolution {
  std::string query_text;
  std::optional<std::string> resolved_doi;
  double match_score = 0;
  ResolutionMethod method = ResolutionMethod::Failed;
  std::string cause;  // why resolution failed
};

struct MetadataServiceConfig {
  std::string base_url = "https://api.crossref.org";
  std::string mailto;
  double min_score = 60.0;
  double requests_per_second = 1.0;
  int max_retries = 3;
  int backoff_ms = 1000;
  int timeout_ms = 30000;
};

inline std::string works_query_url(const MetadataServiceConfig& c, std::string_view citation) {
  std::string base = c.base_url;
  while (!base.empty() && base.back() == '/') base.pop_back();
  std::string url = base + "/works?query.bibliographic=" + url_encode(citation) + "&rows=1";
  if (!c.mailto.empty()) url += "&mailto=" + url_encode(c.mailto);
  return url;
}

/// Bibliographic lookups against a Crossref-style works endpoint.
class MetadataClient {
 public:
  MetadataClient(MetadataServiceConfig config, Transport transport, Sleeper sleeper = ChatClient::default_sleeper(),
                 MonotonicClock clock = [] { return std::chrono::steady_clock::now(); })
      : config_(std::move(config)),
        transport_(std::move(transport)),
        sleeper_(sleeper),
        limiter_(config_.requests_per_second, std::move(clock), sleeper) {}

  const MetadataServiceConfig& config() const { return config_; }

  DoiResolution query(std::string_view citation) {
    DoiResolution r;
    r.query_text = std::string(citation);
    const HttpRequest req{works_query_url(config_, citation), "", config_.timeout_ms};
    for (int attempt = 1; attempt <= 1 + config_.max_retries; ++attempt) {
      if (attempt > 1) sleeper_(std::chrono::milliseconds(std::int64_t{config_.backoff_ms} << (attempt - 2)));
      limiter_.acquire();
      HttpResponse resp;
      try {
        resp = transport_(req);
      } catch (const TransportError& e) {
        r.cause = e.what();
        continue;
      }
      if (resp.status == 429 || resp.status >= 500) {
        r.cause = "HTTP " + std::to_string(resp.status);
        continue;
      }
      if (resp.status != 200) {
        r.cause = "HTTP " + std::to_string(resp.status);
        return r;
      }
      return parse_response(std::move(r), resp.body);
    }
    r.cause = "retries exhausted: " + r.cause;
    return r;
  }

 private:
  DoiResolution parse_response(DoiResolution r, std::string_view body) const {
    try {
      const auto j = nlohmann::json::parse(body);
      const auto& items = j.at("message").at("items");
      if (items.empty()) {
        r.cause = "no match";
        return r;
      }
      const auto doi = items[0].at("DOI").get<std::string>();
      r.match_score = items[0].value("score", 0.0);
      if (r.match_score < config_.min_score) {
        r.cause = "score below threshold";
        return r;
      }
      if (!is_valid_doi(doi)) {
        r.cause = "invalid DOI in response";
        return r;
      }
      r.resolved_doi = doi;
      r.method = ResolutionMethod::MetadataQuery;
    } catch (const nlohmann::json::exception& e) {
      r.cause = std::string("malformed response: ") + e.what();
    }
    return r;
  }

  MetadataServiceConfig config_;
  Transport transport_;
  Sleeper sleeper_;
  RateLimiter limiter_;
};

/// Embedded DOIs short-circuit; otherwise one metadata query, or failure
/// when no client is available.
inline DoiResolution resolve_doi(const BibliographyEntry& entry, MetadataClient* client) {
  if (detail::trim(entry.citation_text).empty()) throw std::invalid_argument("resolve_doi: empty citation text");
  if (entry.embedded_doi) {
    return {entry.citation_text, entry.embedded_doi, 0.0, ResolutionMethod::EmbeddedLink, ""};
  }
  if (client == nullptr) return {entry.citation_text, std::nullopt, 0.0, ResolutionMethod::Failed, "offline"};
  return client->query(entry.citation_text);
}

// ---------------------------------------------------------------------------
// Pair assembly

struct HarvestReport {
  std::size_t pages_processed = 0;
  std::size_t entries_found = 0;
  std::size_t entries_with_annotation = 0;
  std::size_t dois_resolved = 0;
  std::size_t pairs_emitted = 0;
  std::size_t unresolved = 0;        // annotated entries without a DOI
  std::size_t missing_abstract = 0;  // resolved but no abstract

  nlohmann::ordered_json to_json() const {
    return {{"pages_processed", pages_processed}, {"entries_found", entries_found},
            {"entries_with_annotation", entries_with_annotation}, {"dois_resolved", dois_resolved},
            {"pairs_emitted", pairs_emitted}, {"unresolved", unresolved}, {"missing_abstract", missing_abstract}};
  }
};

/// Abstracts keyed by normalized DOI.
using AbstractIndex = std::unordered_map<std::string, std::string>;

inline AbstractIndex load_abstracts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open " + path);
  AbstractIndex out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out[normalize_doi(j.at("doi").get<std::string>())] = j.at("abstract").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw CorpusError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

/// One human pair per annotated entry with a resolved DOI and a non-blank
/// abstract. `resolutions` is aligned with `entries`. Counts entries and
/// drops into `report`.
inline std::vector<PairRecord> assemble_pairs(std::span<const BibliographyEntry> entries,
                                              std::span<const DoiResolution> resolutions, const AbstractIndex& abstracts,
                                              const std::optional<std::string>& annotating_doi, HarvestReport& report) {
  if (entries.size() != resolutions.size()) throw std::invalid_argument("assemble_pairs: misaligned resolutions");
  std::vector<PairRecord> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    const auto& r = resolutions[i];
    ++report.entries_found;
    if (r.resolved_doi) ++report.dois_resolved;
    if (!e.annotation_text) continue;
    ++report.entries_with_annotation;
    if (!r.resolved_doi) {
      ++report.unresolved;
      continue;
    }
    const auto it = abstracts.find(normalize_doi(*r.resolved_doi));
    if (it == abstracts.end() || detail::trim(it->second).empty()) {
      ++report.missing_abstract;
      continue;
    }
    PairRecord rec;
    rec.doi = normalize_doi(*r.resolved_doi);
    rec.abstract = it->second;
    rec.summary = *e.annotation_text;
    rec.summary_source = std::string(kHumanSource);
    rec.target_word_count = static_cast<int>(word_count(rec.summary));
    rec.annotating_doi = annotating_doi;
    out.push_back(std::move(rec));
    ++report.pairs_emitted;
  }
  return out;
}

}  // namespace tldr
