#pragma once

// Rhetorical structure of summaries relative to their role-tagged source
// abstract: per-word role probabilities, 20-bin position heatmaps and the
// early-position novel words.

#include <algorithm>
#include <array>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tldr/tokenize.hpp"

namespace tldr {

enum class Role : std::uint8_t { Background, Objective, Methods, Results, Conclusions, Novel };

inline constexpr std::size_t kContentRoles = 5;
inline constexpr std::size_t kAllRoles = 6;
inline constexpr std::size_t kPositionBins = 20;

inline constexpr std::array<std::string_view, kAllRoles> kRoleNames = {
    "BACKGROUND", "OBJECTIVE", "METHODS", "RESULTS", "CONCLUSIONS", "NOVEL"};

inline std::string_view role_name(Role r) { return kRoleNames[static_cast<std::size_t>(r)]; }

/// Parses one of the five sentence labels. NOVEL is never a sentence label.
inline std::optional<Role> parse_sentence_role(std::string_view label) {
  for (std::size_t i = 0; i < kContentRoles; ++i) {
    if (kRoleNames[i] == label) return static_cast<Role>(i);
  }
  return std::nullopt;
}

class RhetoricalError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RoleTaggedAbstract {
  std::string doi;
  std::vector<std::string> sentences;
  std::vector<Role> labels;  // aligned with sentences

  void validate() const {
    if (labels.size() != sentences.size()) {
      throw RhetoricalError("role labels (" + std::to_string(labels.size()) + ") do not match sentences (" +
                            std::to_string(sentences.size()) + ")");
    }
    for (Role r : labels) {
      if (r == Role::Novel) throw RhetoricalError("NOVEL is not a sentence role");
    }
  }
};

/// c[w][r]: occurrences of case-folded word w in sentences labelled r;
/// totals[r]: all words in role r.
struct RoleCountTable {
  std::unordered_map<std::string, std::array<std::size_t, kContentRoles>> counts;
  std::array<std::size_t, kContentRoles> totals{};

  bool contains(const std::string& folded_word) const { return counts.count(folded_word) > 0; }
};

inline RoleCountTable build_role_counts(const RoleTaggedAbstract& tagged) {
  tagged.validate();
  RoleCountTable table;
  for (std::size_t s = 0; s < tagged.sentences.size(); ++s) {
    const auto r = static_cast<std::size_t>(tagged.labels[s]);
    for (const auto& w : split_words(tagged.sentences[s])) {
      auto& row = table.counts.try_emplace(fold_case(w)).first->second;
      ++row[r];
      ++table.totals[r];
    }
  }
  return table;
}

using RoleDistribution = std::array<double, kAllRoles>;

/// Pr(r | w) = (c[w][r] / N[r]) / sum over r' of (c[w][r'] / N[r']), roles
/// with N[r] = 0 dropped. Words absent from the abstract are NOVEL with
/// probability one.
inline RoleDistribution word_role_probability(const RoleCountTable& table, std::string_view word) {
  RoleDistribution dist{};
  const auto it = table.counts.find(fold_case(word));
  if (it == table.counts.end()) {
    dist[static_cast<std::size_t>(Role::Novel)] = 1.0;
    return dist;
  }
  double norm = 0.0;
  for (std::size_t r = 0; r < kContentRoles; ++r) {
    if (table.totals[r] == 0) continue;
    dist[r] = static_cast<double>(it->second[r]) / static_cast<double>(table.totals[r]);
    norm += dist[r];
  }
  for (std::size_t r = 0; r < kContentRoles; ++r) dist[r] /= norm;
  return dist;
}

/// Bin of word i out of k: min(floor(20 i / k), 19).
inline std::size_t position_bin(std::size_t i, std::size_t k) {
  return std::min(kPositionBins * i / k, kPositionBins - 1);
}

struct PositionHeatmap {
  // cells[role][bin]: mean role probability of the words in the bin.
  std::array<std::array<double, kPositionBins>, kAllRoles> cells{};
  std::array<std::size_t, kPositionBins> counts{};

  bool operator==(const PositionHeatmap&) const = default;
};

inline PositionHeatmap summary_heatmap(std::string_view summary, const RoleCountTable& table) {
  const auto words = split_words(summary);
  if (words.empty()) throw RhetoricalError("summary_heatmap: summary has no words");
  PositionHeatmap hm;
  const std::size_t k = words.size();
  for (std::size_t i = 0; i < k; ++i) {
    const auto bin = position_bin(i, k);
    const auto dist = word_role_probability(table, words[i]);
    for (std::size_t r = 0; r < kAllRoles; ++r) hm.cells[r][bin] += dist[r];
    ++hm.counts[bin];
  }
  for (std::size_t b = 0; b < kPositionBins; ++b) {
    if (hm.counts[b] == 0) continue;
    for (std::size_t r = 0; r < kAllRoles; ++r) hm.cells[r][b] /= static_cast<double>(hm.counts[b]);
  }
  return hm;
}

inline PositionHeatmap summary_heatmap(std::string_view summary, const RoleTaggedAbstract& tagged) {
  return summary_heatmap(summary, build_role_counts(tagged));
}

/// Word-weighted mean: each bin's cells weighted by the member heatmaps'
/// word counts in that bin.
inline PositionHeatmap aggregate_heatmaps(std::span<const PositionHeatmap> heatmaps) {
  if (heatmaps.empty()) throw RhetoricalError("aggregate_heatmaps: no heatmaps");
  PositionHeatmap out;
  for (const auto& hm : heatmaps) {
    for (std::size_t b = 0; b < kPositionBins; ++b) {
      if (hm.counts[b] == 0) continue;
      out.counts[b] += hm.counts[b];
      for (std::size_t r = 0; r < kAllRoles; ++r) {
        out.cells[r][b] += hm.cells[r][b] * static_cast<double>(hm.counts[b]);
      }
    }
  }
  for (std::size_t b = 0; b < kPositionBins; ++b) {
    if (out.counts[b] == 0) continue;
    for (std::size_t r = 0; r < kAllRoles; ++r) out.cells[r][b] /= static_cast<double>(out.counts[b]);
  }
  return out;
}

/// Incremental form of aggregate_heatmaps for corpus-scale runs.
class HeatmapAccumulator {
 public:
  void add(const PositionHeatmap& hm) {
    for (std::size_t b = 0; b < kPositionBins; ++b) {
      if (hm.counts[b] == 0) continue;
      sums_.counts[b] += hm.counts[b];
      for (std::size_t r = 0; r < kAllRoles; ++r) {
        sums_.cells[r][b] += hm.cells[r][b] * static_cast<double>(hm.counts[b]);
      }
    }
    ++added_;
  }
  std::size_t size() const { return added_; }
  PositionHeatmap result() const {
    if (added_ == 0) throw RhetoricalError("HeatmapAccumulator: nothing added");
    PositionHeatmap out = sums_;
    for (std::size_t b = 0; b < kPositionBins; ++b) {
      if (out.counts[b] == 0) continue;
      for (std::size_t r = 0; r < kAllRoles; ++r) out.cells[r][b] /= static_cast<double>(out.counts[b]);
    }
    return out;
  }

 private:
  PositionHeatmap sums_;
  std::size_t added_ = 0;
};

struct SummaryWithTable {
  std::string_view summary;
  const RoleCountTable* table;
};

using WordFrequency = std::pair<std::string, std::size_t>;

/// Novel (case-folded) words at normalised position i/k below
/// cutoff_percentile/100, top k by frequency, ties broken alphabetically.
inline std::vector<WordFrequency> top_novel_words(std::span<const SummaryWithTable> items,
                                                  double cutoff_percentile = 20.0, std::size_t k = 10) {
  std::unordered_map<std::string, std::size_t> freq;
  for (const auto& item : items) {
    const auto words = split_words(item.summary);
    const double n = static_cast<double>(words.size());
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (static_cast<double>(i) / n * 100.0 >= cutoff_percentile) break;
      auto folded = fold_case(words[i]);
      if (!item.table->contains(folded)) ++freq[std::move(folded)];
    }
  }
  std::vector<WordFrequency> ranked(freq.begin(), freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const WordFrequency& a, const WordFrequency& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (ranked.size() > k) ranked.resize(k);
  return ranked;
}

// ---------------------------------------------------------------------------
// roles.jsonl: {"doi": str, "sentences": [str], "labels": [str]}

inline RoleTaggedAbstract parse_role_record(const nlohmann::json& j) {
  RoleTaggedAbstract t;
  t.doi = j.at("doi").get<std::string>();
  t.sentences = j.at("sentences").get<std::vector<std::string>>();
  for (const auto& label : j.at("labels")) {
    const auto role = parse_sentence_role(label.get<std::string>());
    if (!role) throw RhetoricalError("unknown role label \"" + label.get<std::string>() + "\"");
    t.labels.push_back(*role);
  }
  t.validate();
  return t;
}

inline nlohmann::ordered_json to_json(const RoleTaggedAbstract& t) {
  nlohmann::ordered_json j;
  j["doi"] = t.doi;
  j["sentences"] = t.sentences;
  auto labels = nlohmann::ordered_json::array();
  for (Role r : t.labels) labels.push_back(std::string(role_name(r)));
  j["labels"] = labels;
  return j;
}

/// Role-tagged abstracts keyed by DOI; a later line for the same DOI wins.
inline std::unordered_map<std::string, RoleTaggedAbstract> load_role_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw RhetoricalError("cannot open " + path);
  std::unordered_map<std::string, RoleTaggedAbstract> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto t = parse_role_record(nlohmann::json::parse(line));
      out[t.doi] = std::move(t);
    } catch (const std::exception& e) {
      throw RhetoricalError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Heatmap CSV: header "role,0,...,19"; six role rows; a COUNT row.
// Cells are printed with 17 significant digits so reading back is exact.

inline void write_heatmap_csv(std::ostream& out, const PositionHeatmap& hm) {
  out << "role";
  for (std::size_t b = 0; b < kPositionBins; ++b) out << ',' << b;
  out << '\n';
  std::ostringstream cell;
  cell << std::setprecision(17);
  for (std::size_t r = 0; r < kAllRoles; ++r) {
    out << kRoleNames[r];
    for (std::size_t b = 0; b < kPositionBins; ++b) {
      cell.str("");
      cell << hm.cells[r][b];
      out << ',' << cell.str();
    }
    out << '\n';
  }
  out << "COUNT";
  for (std::size_t b = 0; b < kPositionBins; ++b) out << ',' << hm.counts[b];
  out << '\n';
}

inline PositionHeatmap read_heatmap_csv(std::istream& in) {
  PositionHeatmap hm;
  std::string line;
  if (!std::getline(in, line)) throw RhetoricalError("heatmap CSV: missing header");
  auto fields = [](const std::string& l) {
    std::vector<std::string> f;
    std::stringstream ss(l);
    std::string item;
    while (std::getline(ss, item, ',')) f.push_back(item);
    return f;
  };
  for (std::size_t row = 0; row <= kAllRoles; ++row) {
    if (!std::getline(in, line)) throw RhetoricalError("heatmap CSV: truncated");
    const auto f = fields(line);
    if (f.size() != kPositionBins + 1) throw RhetoricalError("heatmap CSV: expected 21 fields");
    const std::string_view expected = row < kAllRoles ? kRoleNames[row] : std::string_view("COUNT");
    if (f[0] != expected) throw RhetoricalError("heatmap CSV: unexpected row " + f[0]);
    for (std::size_t b = 0; b < kPositionBins; ++b) {
      if (row < kAllRoles) {
        hm.cells[row][b] = std::stod(f[b + 1]);
      } else {
        hm.counts[b] = static_cast<std::size_t>(std::stoull(f[b + 1]));
      }
    }
  }
  return hm;
}

}  // namespace tldr
