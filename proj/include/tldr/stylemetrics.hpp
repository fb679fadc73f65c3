#pragma once

// Descriptive style statistics: length, entity density, few-shot copy rate,
// seven grade-level readability formulas, novel n-gram abstractiveness and
// the two-sided Mann-Whitney U test used to compare sources.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "tldr/tokenize.hpp"
#include "tldr/word_lists.hpp"

namespace tldr {

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// Length statistics

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation (n - 1); 0 for a single value
};

inline MeanSd mean_sd(std::span<const double> values) {
  if (values.empty()) throw MetricError("mean_sd: no values");
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  if (values.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

struct LengthStats {
  double mean_words = 0, sd_words = 0;
  double mean_sentences = 0, sd_sentences = 0;
  // Mean of per-text ratios, not ratio of means.
  double mean_words_per_sentence = 0, sd_words_per_sentence = 0;
};

inline LengthStats length_stats(std::span<const std::string> texts) {
  if (texts.empty()) throw MetricError("length_stats: no texts");
  std::vector<double> words, sentences, ratios;
  words.reserve(texts.size());
  sentences.reserve(texts.size());
  for (const auto& text : texts) {
    const auto w = static_cast<double>(word_count(text));
    const auto s = static_cast<double>(split_sentences(text).size());
    words.push_back(w);
    sentences.push_back(s);
    if (s > 0) ratios.push_back(w / s);
  }
  LengthStats out;
  auto w = mean_sd(words);
  auto s = mean_sd(sentences);
  out.mean_words = w.mean;
  out.sd_words = w.sd;
  out.mean_sentences = s.mean;
  out.sd_sentences = s.sd;
  if (!ratios.empty()) {
    auto r = mean_sd(ratios);
    out.mean_words_per_sentence = r.mean;
    out.sd_words_per_sentence = r.sd;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Named-entity density

/// Offsets count Unicode code points (the sidecar's string indexing).
struct EntitySpan {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string label;
  bool operator==(const EntitySpan&) const = default;
};

using EntitySpans = std::vector<EntitySpan>;

inline std::size_t code_point_length(std::string_view text) { return detail::decode_utf8(text).size(); }

/// Throws MetricError unless every span lies inside `text` and no two overlap.
inline void validate_spans(std::string_view text, const EntitySpans& spans) {
  const auto length = code_point_length(text);
  EntitySpans sorted = spans;
  std::sort(sorted.begin(), sorted.end(),
            [](const EntitySpan& a, const EntitySpan& b) { return a.start < b.start; });
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const auto& s = sorted[i];
    if (!(s.start < s.end && s.end <= length)) {
      throw MetricError("entity span [" + std::to_string(s.start) + "," + std::to_string(s.end) +
                        ") outside text of length " + std::to_string(length));
    }
    if (i > 0 && sorted[i - 1].end > s.start) throw MetricError("overlapping entity spans");
  }
}

/// Entities per 100 words.
inline double entity_density(std::string_view text, const EntitySpans& spans) {
  validate_spans(text, spans);
  const auto words = word_count(text);
  if (words == 0) throw MetricError("entity_density: text has no words");
  return 100.0 * static_cast<double>(spans.size()) / static_cast<double>(words);
}

/// One line of the standoff spans file written by the NLP sidecar.
struct EntityRecord {
  std::string doi;
  std::string text_role;  // "abstract" or "summary"
  int summary_index = 0;
  std::string source = "human";  // summary author; optional field, model ids for generated text
  EntitySpans spans;
};

inline EntityRecord parse_entity_record(const nlohmann::json& j) {
  EntityRecord rec;
  rec.doi = j.at("doi").get<std::string>();
  rec.text_role = j.at("text_role").get<std::string>();
  if (rec.text_role != "abstract" && rec.text_role != "summary") {
    throw MetricError("text_role must be \"abstract\" or \"summary\"");
  }
  rec.summary_index = j.value("summary_index", 0);
  rec.source = j.value("source", std::string("human"));
  for (const auto& s : j.at("spans")) {
    if (!s.is_array() || s.size() != 3) throw MetricError("span must be [start, end, label]");
    rec.spans.push_back({s[0].get<std::size_t>(), s[1].get<std::size_t>(), s[2].get<std::string>()});
  }
  return rec;
}

inline std::vector<EntityRecord> load_entity_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MetricError("cannot open " + path);
  std::vector<EntityRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_entity_record(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw MetricError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Few-shot copy rate

/// Percentage of the summary's trigram occurrences that also occur in any
/// training summary (case folded). Summaries under three words score 0.
inline double copy_rate(std::string_view summary, std::span<const std::string> train_summaries) {
  if (train_summaries.empty()) throw MetricError("copy_rate: no training summaries");
  const auto words = split_words(summary);
  if (words.size() < 3) return 0.0;
  std::unordered_set<std::string> train;
  for (const auto& t : train_summaries) {
    const auto tw = split_words(t);
    for (auto& key : ngram_keys(tw, 3)) train.insert(std::move(key));
  }
  const auto keys = ngram_keys(words, 3);
  std::size_t copied = 0;
  for (const auto& key : keys) copied += train.count(key);
  return 100.0 * static_cast<double>(copied) / static_cast<double>(keys.size());
}

struct CopyRateStats {
  double pct_zero = 0;  // share of summaries with a 0% rate
  double pct_gt10 = 0;  // share with a rate above 10%
  double max_rate = 0;
  std::size_t counted = 0;
  std::size_t excluded = 0;  // summaries under three words
};

inline CopyRateStats copy_rate_stats(std::span<const std::string> summaries,
                                     std::span<const std::string> train_summaries) {
  CopyRateStats out;
  std::size_t zero = 0, gt10 = 0;
  for (const auto& s : summaries) {
    if (word_count(s) < 3) {
      ++out.excluded;
      continue;
    }
    const double rate = copy_rate(s, train_summaries);
    ++out.counted;
    if (rate == 0.0) ++zero;
    if (rate > 10.0) ++gt10;
    out.max_rate = std::max(out.max_rate, rate);
  }
  if (out.counted > 0) {
    out.pct_zero = 100.0 * static_cast<double>(zero) / static_cast<double>(out.counted);
    out.pct_gt10 = 100.0 * static_cast<double>(gt10) / static_cast<double>(out.counted);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Readability

struct ReadabilityScores {
  double fkg = 0;   // Flesch-Kincaid grade
  double gf = 0;    // Gunning fog
  double smog = 0;  // SMOG index
  double ari = 0;   // automated readability index
  double cli = 0;   // Coleman-Liau
  double lwf = 0;   // Linsear Write
  double dcrs = 0;  // Dale-Chall

  static constexpr std::size_t size() { return 7; }
  double operator[](std::size_t i) const {
    switch (i) {
      case 0: return fkg;
      case 1: return gf;
      case 2: return smog;
      case 3: return ari;
      case 4: return cli;
      case 5: return lwf;
      case 6: return dcrs;
      default: throw std::out_of_range("ReadabilityScores index");
    }
  }
  static constexpr std::array<std::string_view, 7> names() {
    return {"FKG", "GF", "SMOG", "ARI", "CLI", "LWF", "DCRS"};
  }
};

namespace detail {

inline const std::unordered_set<std::string>& familiar_word_list() {
  static const auto list = parse_word_list(data::familiar_words);
  return list;
}

inline bool has_ascii_letter(std::string_view w) {
  return std::any_of(w.begin(), w.end(), [](char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); });
}

inline bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() > suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

inline bool familiar_single(std::string w) {
  const auto& list = familiar_word_list();
  if (list.count(w)) return true;
  if (ends_with(w, "'s")) {
    w.erase(w.size() - 2);
  } else if (ends_with(w, "\xE2\x80\x99s")) {
    w.erase(w.size() - 4);
  }
  if (list.count(w)) return true;
  auto stem_in = [&](std::string_view suffix, std::string_view replacement) {
    if (!ends_with(w, suffix)) return false;
    std::string base = w.substr(0, w.size() - suffix.size());
    base += replacement;
    return list.count(base) > 0;
  };
  return stem_in("s", "") || stem_in("es", "") || stem_in("ies", "y") || stem_in("ed", "") ||
         stem_in("d", "") || stem_in("ied", "y") || stem_in("ing", "") || stem_in("ing", "e") ||
         stem_in("ly", "") || stem_in("er", "") || stem_in("est", "");
}

}  // namespace detail

/// Familiar-word lookup: case folded; tokens without letters count as
/// familiar; "-" compounds are familiar when listed whole or when every part
/// is familiar; simple plural, possessive, -ed, -ing, -ly, -er, -est forms
/// fall back to their base word.
inline bool is_familiar_word(std::string_view word) {
  if (!detail::has_ascii_letter(word) && !word.empty()) {
    // Non-ASCII-only tokens (Greek letters etc.) are unfamiliar.
    for (const auto& cp : detail::decode_utf8(word)) {
      if (cp.value >= 0x80) return false;
    }
    return true;
  }
  const std::string w = fold_case(word);
  if (detail::familiar_single(w)) return true;
  if (w.find('-') == std::string::npos) return false;
  std::size_t pos = 0;
  while (pos <= w.size()) {
    auto dash = w.find('-', pos);
    if (dash == std::string::npos) dash = w.size();
    const auto part = w.substr(pos, dash - pos);
    if (part.empty()) return false;
    if (detail::has_ascii_letter(part) && !detail::familiar_single(part)) return false;
    pos = dash + 1;
  }
  return true;
}

/// Counts feeding the readability formulas.
struct ReadabilityCounts {
  double words = 0;
  double sentences = 0;
  double syllables = 0;
  double characters = 0;    // letters and digits
  double polysyllables = 0; // words with >= 3 syllables
  double unfamiliar = 0;    // words outside the familiar-word list
  double lwf_easy = 0;      // first 100 words, <= 2 syllables
  double lwf_hard = 0;      // first 100 words, >= 3 syllables
  double lwf_sentences = 0; // sentences touched by the first 100 words
};

inline ReadabilityCounts readability_counts(std::string_view text) {
  const auto tok = tokenize(text);
  if (tok.words.empty() || tok.sentences.empty()) {
    throw MetricError("readability: text needs at least one word and one sentence");
  }
  ReadabilityCounts c;
  c.words = static_cast<double>(tok.words.size());
  c.sentences = static_cast<double>(tok.sentences.size());
  c.characters = static_cast<double>(tok.char_count);
  for (std::size_t i = 0; i < tok.words.size(); ++i) {
    const int syl = tok.syllables[i];
    c.syllables += syl;
    if (syl >= 3) c.polysyllables += 1;
    if (!is_familiar_word(tok.words[i])) c.unfamiliar += 1;
    if (i < 100) (syl >= 3 ? c.lwf_hard : c.lwf_easy) += 1;
  }
  const std::size_t window = std::min<std::size_t>(100, tok.words.size());
  std::size_t seen = 0;
  for (auto count : tok.sentence_word_counts) {
    if (seen >= window) break;
    c.lwf_sentences += 1;
    seen += count;
  }
  return c;
}

inline ReadabilityScores readability_from_counts(const ReadabilityCounts& c) {
  const double wps = c.words / c.sentences;
  ReadabilityScores r;
  r.fkg = 0.39 * wps + 11.8 * (c.syllables / c.words) - 15.59;
  r.gf = 0.4 * (wps + 100.0 * c.polysyllables / c.words);
  r.smog = 1.0430 * std::sqrt(c.polysyllables * 30.0 / c.sentences) + 3.1291;
  r.ari = 4.71 * (c.characters / c.words) + 0.5 * wps - 21.43;
  r.cli = 0.0588 * (100.0 * c.characters / c.words) - 0.296 * (100.0 * c.sentences / c.words) - 15.8;
  const double lw = (c.lwf_easy * 1.0 + c.lwf_hard * 3.0) / c.lwf_sentences;
  r.lwf = lw > 20.0 ? lw / 2.0 : (lw - 2.0) / 2.0;
  const double difficult = c.unfamiliar / c.words;
  r.dcrs = 15.79 * difficult + 0.0496 * wps;
  if (difficult > 0.05) r.dcrs += 3.6365;
  return r;
}

inline ReadabilityScores readability_scores(std::string_view text) {
  return readability_from_counts(readability_counts(text));
}

// ---------------------------------------------------------------------------
// Abstractiveness

/// Percentage of the summary's n-gram occurrences absent from the abstract's
/// n-gram set (case folded). nullopt when the summary has fewer than n words;
/// such summaries are left out of aggregates.
inline std::optional<double> novel_ngram_fraction(std::string_view summary, std::string_view abstract, int n) {
  if (n < 1 || n > 3) throw MetricError("novel_ngram_fraction: n must be 1, 2 or 3");
  const auto sw = split_words(summary);
  if (sw.size() < static_cast<std::size_t>(n)) return std::nullopt;
  const auto aw = split_words(abstract);
  const auto abstract_keys = ngram_keys(aw, n);
  const std::unordered_set<std::string> source(abstract_keys.begin(), abstract_keys.end());
  const auto keys = ngram_keys(sw, n);
  std::size_t novel = 0;
  for (const auto& k : keys) novel += source.count(k) == 0 ? 1 : 0;
  return 100.0 * static_cast<double>(novel) / static_cast<double>(keys.size());
}

// ---------------------------------------------------------------------------
// Mann-Whitney U

struct MannWhitneyResult {
  double u_a = 0;  // U statistic of sample_a
  double u_b = 0;  // n_a * n_b - u_a
  double p = 1.0;  // two-sided
  bool exact = false;
};

inline constexpr std::size_t kMannWhitneyExactLimit = 400;  // n_a * n_b

/// Two-sided Mann-Whitney U with midranks for ties. Exact permutation
/// distribution of the tied ranks when n_a * n_b <= 400; otherwise normal
/// approximation with tie-corrected variance and continuity correction.
inline MannWhitneyResult mann_whitney_u(std::span<const double> sample_a, std::span<const double> sample_b) {
  if (sample_a.empty() || sample_b.empty()) throw MetricError("mann_whitney_u: empty sample");
  const std::size_t na = sample_a.size(), nb = sample_b.size(), n = na + nb;

  struct Item {
    double value;
    bool in_a;
  };
  std::vector<Item> pooled;
  pooled.reserve(n);
  for (double v : sample_a) pooled.push_back({v, true});
  for (double v : sample_b) pooled.push_back({v, false});
  std::stable_sort(pooled.begin(), pooled.end(), [](const Item& x, const Item& y) { return x.value < y.value; });

  // Doubled midranks stay integral: a tie block over 1-based positions
  // s..e has midrank (s + e) / 2.
  std::vector<std::int64_t> rank2(n);
  std::int64_t rank2_sum_a = 0;
  double tie_term = 0.0;  // sum of t^3 - t
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && pooled[j + 1].value == pooled[i].value) ++j;
    const auto r2 = static_cast<std::int64_t>(i + 1 + j + 1);
    const auto t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    for (std::size_t k = i; k <= j; ++k) {
      rank2[k] = r2;
      if (pooled[k].in_a) rank2_sum_a += r2;
    }
    i = j + 1;
  }
  const auto na64 = static_cast<std::int64_t>(na), nb64 = static_cast<std::int64_t>(nb);
  const std::int64_t u2_a = rank2_sum_a - na64 * (na64 + 1);  // 2 * U_a

  MannWhitneyResult res;
  res.u_a = static_cast<double>(u2_a) / 2.0;
  res.u_b = static_cast<double>(na64 * nb64) - res.u_a;

  if (na * nb <= kMannWhitneyExactLimit) {
    // Count subsets of size k = min(na, nb) by doubled rank sum.
    const bool a_small = na <= nb;
    const std::size_t k = a_small ? na : nb;
    std::int64_t max_sum = 0;
    for (auto r : rank2) max_sum += r;
    std::vector<std::vector<double>> ways(k + 1, std::vector<double>(static_cast<std::size_t>(max_sum) + 1, 0.0));
    ways[0][0] = 1.0;
    for (std::size_t idx = 0; idx < n; ++idx) {
      const auto r = static_cast<std::size_t>(rank2[idx]);
      for (std::size_t c = std::min(k, idx + 1); c >= 1; --c) {
        auto& dst = ways[c];
        const auto& src = ways[c - 1];
        for (std::size_t s = static_cast<std::size_t>(max_sum); s >= r; --s) {
          if (src[s - r] != 0.0) dst[s] += src[s - r];
          if (s == r) break;
        }
      }
    }
    const auto k64 = static_cast<std::int64_t>(k);
    const std::int64_t u2_small = a_small ? u2_a : 2 * na64 * nb64 - u2_a;
    const std::int64_t center2 = na64 * nb64;  // 2 * E[U]
    const std::int64_t observed = std::llabs(u2_small - center2);
    double total = 0.0, extreme = 0.0;
    for (std::int64_t s = 0; s <= max_sum; ++s) {
      const double w = ways[k][static_cast<std::size_t>(s)];
      if (w == 0.0) continue;
      total += w;
      const std::int64_t u2 = s - k64 * (k64 + 1);
      if (std::llabs(u2 - center2) >= observed) extreme += w;
    }
    res.p = std::min(1.0, extreme / total);
    res.exact = true;
    return res;
  }

  const double nn = static_cast<double>(n);
  const double mean = static_cast<double>(na) * static_cast<double>(nb) / 2.0;
  const double var = static_cast<double>(na) * static_cast<double>(nb) / 12.0 *
                     ((nn + 1.0) - tie_term / (nn * (nn - 1.0)));
  if (var <= 0.0) {
    res.p = 1.0;
    return res;
  }
  const double z = std::max(0.0, std::fabs(res.u_a - mean) - 0.5) / std::sqrt(var);
  res.p = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  return res;
}

}  // namespace tldr
