#pragma once

// Abstract-summary pairs: JSONL ingestion, validation, the fixed few-shot
// split and per-paper grouping.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "tldr/random.hpp"
#include "tldr/tokenize.hpp"

namespace tldr {

inline constexpr std::string_view kHumanSource = "human";
inline constexpr std::size_t kFewShotSize = 5;

struct PairRecord {
  std::string doi;
  std::string abstract;
  std::string summary;
  std::string summary_source;  // "human" or a model id
  int target_word_count = 0;
  std::optional<std::string> annotating_doi;

  bool is_human() const { return summary_source == kHumanSource; }
  bool operator==(const PairRecord&) const = default;
};

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Corpus {
  std::vector<PairRecord> records;
  // Indices into records; empty until split_few_shot().
  std::vector<std::size_t> few_shot;
  std::vector<std::size_t> test;

  bool is_split() const { return few_shot.size() == kFewShotSize; }
};

struct LineIssue {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct LoadResult {
  Corpus corpus;
  std::vector<LineIssue> rejects;
  std::vector<LineIssue> warnings;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline std::string required_text(const nlohmann::json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw CorpusError(std::string("missing \"") + key + "\"");
  if (!it->is_string()) throw CorpusError(std::string("\"") + key + "\" is not a string");
  auto value = it->get<std::string>();
  if (trim(value).empty()) throw CorpusError(std::string("\"") + key + "\" is blank");
  return value;
}

}  // namespace detail

/// Validate one JSON object as a PairRecord. Unknown keys are appended to
/// `unknown_keys` rather than rejected.
inline PairRecord parse_pair_record(const nlohmann::json& obj, std::vector<std::string>* unknown_keys = nullptr) {
  if (!obj.is_object()) throw CorpusError("record is not a JSON object");
  PairRecord rec;
  rec.doi = detail::required_text(obj, "doi");
  rec.abstract = detail::required_text(obj, "abstract");
  rec.summary = detail::required_text(obj, "summary");
  rec.summary_source = detail::required_text(obj, "summary_source");

  auto wc = obj.find("target_word_count");
  if (wc == obj.end()) throw CorpusError("missing \"target_word_count\"");
  if (!wc->is_number_integer()) throw CorpusError("\"target_word_count\" is not an integer");
  const auto count = wc->get<std::int64_t>();
  if (count <= 0 || count > INT32_MAX) throw CorpusError("\"target_word_count\" must be positive");
  rec.target_word_count = static_cast<int>(count);

  if (auto ad = obj.find("annotating_doi"); ad != obj.end() && !ad->is_null()) {
    if (!ad->is_string()) throw CorpusError("\"annotating_doi\" is not a string or null");
    rec.annotating_doi = ad->get<std::string>();
  }

  if (rec.is_human()) {
    const auto words = word_count(rec.summary);
    if (words != static_cast<std::size_t>(rec.target_word_count)) {
      throw CorpusError("target_word_count " + std::to_string(rec.target_word_count) +
                        " does not match the human summary's " + std::to_string(words) + " words");
    }
  }

  if (unknown_keys != nullptr) {
    static const std::vector<std::string> known = {"doi", "abstract", "summary", "summary_source",
                                                   "target_word_count", "annotating_doi"};
    for (const auto& item : obj.items()) {
      if (std::find(known.begin(), known.end(), item.key()) == known.end()) {
        unknown_keys->push_back(item.key());
      }
    }
  }
  return rec;
}

inline nlohmann::ordered_json to_json(const PairRecord& rec) {
  nlohmann::ordered_json j;
  j["doi"] = rec.doi;
  j["abstract"] = rec.abstract;
  j["summary"] = rec.summary;
  j["summary_source"] = rec.summary_source;
  j["target_word_count"] = rec.target_word_count;
  j["annotating_doi"] = rec.annotating_doi ? nlohmann::ordered_json(*rec.annotating_doi) : nullptr;
  return j;
}

/// Parse a JSONL stream. Malformed lines are reported and skipped; blank
/// lines are ignored. Throws CorpusError when nothing valid remains.
inline LoadResult read_pairs(std::istream& in) {
  LoadResult result;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    try {
      const auto obj = nlohmann::json::parse(line);
      std::vector<std::string> unknown;
      result.corpus.records.push_back(parse_pair_record(obj, &unknown));
      for (const auto& key : unknown) {
        result.warnings.push_back({lineno, "unknown key \"" + key + "\" ignored"});
      }
    } catch (const nlohmann::json::exception& e) {
      result.rejects.push_back({lineno, std::string("invalid JSON: ") + e.what()});
    } catch (const CorpusError& e) {
      result.rejects.push_back({lineno, e.what()});
    }
  }
  if (result.corpus.records.empty()) {
    throw CorpusError("no valid records (" + std::to_string(result.rejects.size()) + " rejected)");
  }
  return result;
}

inline LoadResult load_pairs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open " + path);
  try {
    return read_pairs(in);
  } catch (const CorpusError& e) {
    throw CorpusError(path + ": " + e.what());
  }
}

inline void write_pairs(std::ostream& out, std::span<const PairRecord> records) {
  for (const auto& rec : records) out << to_json(rec).dump() << '\n';
}

/// Fix the five few-shot examples. Indices are permuted by Fisher-Yates
/// (i from N-1 down to 1, j = uniform_index(rng, i + 1)) driven by
/// mt19937_64(seed); the first five positions become the few-shot set.
/// Both index lists are returned in ascending record order.
inline Corpus split_few_shot(const Corpus& corpus, std::uint64_t seed) {
  const std::size_t n = corpus.records.size();
  if (n < kFewShotSize + 1) {
    throw CorpusError("split_few_shot needs at least 6 records, got " + std::to_string(n));
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(uniform_index(rng, i + 1));
    std::swap(perm[i], perm[j]);
  }
  Corpus out;
  out.records = corpus.records;
  out.few_shot.assign(perm.begin(), perm.begin() + kFewShotSize);
  out.test.assign(perm.begin() + kFewShotSize, perm.end());
  std::sort(out.few_shot.begin(), out.few_shot.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

struct PaperGroup {
  std::string doi;
  std::vector<PairRecord> summaries;

  bool baseline_eligible() const { return summaries.size() >= 2; }
};

/// Human summaries grouped by DOI, in order of first appearance.
inline std::vector<PaperGroup> group_by_paper(const Corpus& corpus) {
  std::vector<PaperGroup> groups;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& rec : corpus.records) {
    if (!rec.is_human()) continue;
    auto [it, inserted] = index.try_emplace(rec.doi, groups.size());
    if (inserted) groups.push_back({rec.doi, {}});
    groups[it->second].summaries.push_back(rec);
  }
  return groups;
}

/// Number of papers annotated exactly k times, for k = 1..max.
inline std::vector<std::size_t> annotation_count_histogram(std::span<const PaperGroup> groups) {
  std::vector<std::size_t> hist;
  for (const auto& g : groups) {
    if (hist.size() < g.summaries.size()) hist.resize(g.summaries.size(), 0);
    ++hist[g.summaries.size() - 1];
  }
  return hist;
}

}  // namespace tldr
