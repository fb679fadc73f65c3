#pragma once

// Full audit: loads pairs, generations and optional sidecar outputs,
// builds one row per source and writes tables, heatmaps and plots.

#include <algorithm>
#include <array>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "tldr/corpus.hpp"
#include "tldr/llmclient.hpp"
#include "tldr/refmetrics.hpp"
#include "tldr/rhetorical.hpp"
#include "tldr/stylemetrics.hpp"

namespace tldr {

/// Missing or malformed input; the CLI maps it to exit code 1.
class AuditError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Configuration
//
// Text format, one `key = value` per line, '#' starts a comment:
//
//   pairs               = pairs.jsonl          (required)
//   generations         = a.jsonl, b.jsonl     (repeatable; appends)
//   spans               = spans.jsonl
//   roles               = roles.jsonl
//   semantic_human      = scores_human.jsonl
//   semantic_abstract   = scores_abstract.jsonl
//   out_dir             = report
//   split_seed          = 2025
//   baseline_seed       = 0
//   baseline_iterations = 10
//   bleu_mode           = sentence | corpus
//   bleu_epsilon        = 0.01
//   sections            = lengths, readability, novelty, references, rhetoric
//   top_novel_cutoff    = 20
//   top_novel_k         = 10
//   threads             = 0                    (0: hardware concurrency)
//
// Relative paths in a file resolve against the file's directory.

struct AuditConfig {
  std::string pairs;
  std::vector<std::string> generations;
  std::string spans;
  std::string roles;
  std::string semantic_human;
  std::string semantic_abstract;
  std::string out_dir = "report";
  std::uint64_t split_seed = 2025;
  std::uint64_t baseline_seed = 0;
  int baseline_iterations = 10;
  BleuMode bleu_mode = BleuMode::SentenceMean;
  double bleu_epsilon = 0.01;
  bool lengths = true;
  bool readability = true;
  bool novelty = true;
  bool references = true;
  bool rhetoric = true;
  double top_novel_cutoff = 20.0;
  std::size_t top_novel_k = 10;
  int threads = 0;

  /// Applies one key; `base` resolves relative paths.
  void set(std::string_view key, std::string_view value, const std::filesystem::path& base = {});

  /// Throws AuditError naming the first missing input.
  void validate() const;
};

namespace detail {

inline std::vector<std::string> split_list(std::string_view value) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= value.size()) {
    auto comma = value.find(',', pos);
    if (comma == std::string_view::npos) comma = value.size();
    const auto item = trim(value.substr(pos, comma - pos));
    if (!item.empty()) out.emplace_back(item);
    pos = comma + 1;
  }
  return out;
}

inline std::string resolve_path(std::string_view value, const std::filesystem::path& base) {
  std::filesystem::path p{std::string(value)};
  if (p.is_relative() && !base.empty()) p = base / p;
  return p.lexically_normal().string();
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  std::istringstream in{std::string(value)};
  T v{};
  if (!(in >> v) || !(in >> std::ws).eof()) {
    throw AuditError("config: " + std::string(key) + " expects a number, got \"" + std::string(value) + "\"");
  }
  return v;
}

}  // namespace detail

inline void AuditConfig::set(std::string_view key, std::string_view raw, const std::filesystem::path& base) {
  const auto value = detail::trim(raw);
  const auto path = [&] { return detail::resolve_path(value, base); };
  if (key == "pairs") {
    pairs = path();
  } else if (key == "generations") {
    for (const auto& g : detail::split_list(value)) generations.push_back(detail::resolve_path(g, base));
  } else if (key == "spans") {
    spans = path();
  } else if (key == "roles") {
    roles = path();
  } else if (key == "semantic_human") {
    semantic_human = path();
  } else if (key == "semantic_abstract") {
    semantic_abstract = path();
  } else if (key == "out_dir") {
    out_dir = path();
  } else if (key == "split_seed") {
    split_seed = detail::parse_number<std::uint64_t>(key, value);
  } else if (key == "baseline_seed") {
    baseline_seed = detail::parse_number<std::uint64_t>(key, value);
  } else if (key == "baseline_iterations") {
    baseline_iterations = detail::parse_number<int>(key, value);
  } else if (key == "bleu_mode") {
    if (value == "sentence") {
      bleu_mode = BleuMode::SentenceMean;
    } else if (value == "corpus") {
      bleu_mode = BleuMode::Corpus;
    } else {
      throw AuditError("config: bleu_mode must be sentence or corpus");
    }
  } else if (key == "bleu_epsilon") {
    bleu_epsilon = detail::parse_number<double>(key, value);
  } else if (key == "sections") {
    lengths = readability = novelty = references = rhetoric = false;
    for (const auto& s : detail::split_list(value)) {
      if (s == "lengths") lengths = true;
      else if (s == "readability") readability = true;
      else if (s == "novelty") novelty = true;
      else if (s == "references") references = true;
      else if (s == "rhetoric") rhetoric = true;
      else throw AuditError("config: unknown section " + s);
    }
  } else if (key == "top_novel_cutoff") {
    top_novel_cutoff = detail::parse_number<double>(key, value);
  } else if (key == "top_novel_k") {
    top_novel_k = detail::parse_number<std::size_t>(key, value);
  } else if (key == "threads") {
    threads = detail::parse_number<int>(key, value);
  } else {
    throw AuditError("config: unknown key " + std::string(key));
  }
}

inline void AuditConfig::validate() const {
  if (pairs.empty()) throw AuditError("config: pairs is required");
  auto require = [](const std::string& p) {
    if (!p.empty() && !std::filesystem::is_regular_file(p)) throw AuditError("input not found: " + p);
  };
  require(pairs);
  for (const auto& g : generations) require(g);
  require(spans);
  require(roles);
  require(semantic_human);
  require(semantic_abstract);
  if (baseline_iterations < 1) throw AuditError("config: baseline_iterations must be >= 1");
  if (!(bleu_epsilon > 0.0)) throw AuditError("config: bleu_epsilon must be positive");
  if (top_novel_cutoff <= 0.0 || top_novel_cutoff > 100.0) throw AuditError("config: top_novel_cutoff in (0, 100]");
}

inline AuditConfig parse_audit_config(std::istream& in, const std::filesystem::path& base = {}) {
  AuditConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw AuditError("config line " + std::to_string(lineno) + ": expected key = value");
    try {
      cfg.set(detail::trim(body.substr(0, eq)), body.substr(eq + 1), base);
    } catch (const AuditError& e) {
      throw AuditError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

inline AuditConfig load_audit_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw AuditError("cannot open config " + path);
  return parse_audit_config(in, std::filesystem::path(path).parent_path());
}

// ---------------------------------------------------------------------------
// Report

enum class SourceKind { Model, Human, Abstract };

inline constexpr std::string_view kHumanRow = "Human";
inline constexpr std::string_view kAbstractRow = "Abstract";

struct SourceRow {
  std::string name;
  SourceKind kind = SourceKind::Model;
  std::size_t texts = 0;
  std::optional<LengthStats> length;
  std::optional<MeanSd> entity_density;
  std::optional<CopyRateStats> copy_rate;  // models only
  std::optional<ReadabilityScores> readability;
  std::array<std::optional<MeanSd>, 3> novel;  // n = 1, 2, 3; not for Abstract
  std::optional<MetricRow> human_referenced;   // Human: cross-referenced baseline
  std::optional<MetricRow> abstract_referenced;
  std::optional<PositionHeatmap> heatmap;
  std::vector<WordFrequency> top_novel;
  std::map<std::string, std::size_t> degenerate;  // flag name -> generations carrying it
};

struct SignificanceRow {
  std::string source;
  std::string metric;
  std::size_t n_source = 0;
  std::size_t n_abstract = 0;
  MannWhitneyResult result;
};

struct StyleReport {
  std::vector<SourceRow> rows;  // models in input order, then Human, then Abstract
  std::vector<SignificanceRow> significance;
  std::vector<std::size_t> annotation_counts;  // [k-1] = papers with k summaries
  std::map<std::string, std::string> skipped_sections;  // section -> reason
  std::map<std::string, std::size_t> skipped_items;     // reason -> count
  std::vector<std::string> warnings;

  bool partial() const {
    for (const auto& [reason, n] : skipped_items) {
      if (n > 0) return true;
    }
    return false;
  }
  const SourceRow* row(std::string_view name) const {
    for (const auto& r : rows) {
      if (r.name == name) return &r;
    }
    return nullptr;
  }
};

namespace detail {

inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const auto hw = std::max(1u, std::thread::hardware_concurrency());
  const auto workers = std::min<std::size_t>(n, threads > 0 ? static_cast<std::size_t>(threads) : hw);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex mu;
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < workers; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(mu);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

struct SourceTexts {
  std::string name;
  SourceKind kind;
  std::vector<std::string> texts;
  std::vector<std::string> dois;
  std::vector<int> summary_index;      // position among this source's texts for the DOI
  std::vector<std::string> candidate_ids;
  std::vector<const GenerationRecord*> generations;
};

struct PerText {
  std::optional<ReadabilityScores> readability;
  std::array<std::optional<double>, 3> novel;
  std::optional<PositionHeatmap> heatmap;
  bool heatmap_missing_roles = false;
};

inline std::string entity_key(std::string_view source, std::string_view role, std::string_view doi, int index) {
  std::string key;
  key.append(source).append("\n").append(role).append("\n").append(doi).append("\n");
  key += std::to_string(index);
  return key;
}

}  // namespace detail

/// Runs every enabled section. Throws AuditError on missing or unreadable
/// inputs; skipped items are counted in the report instead.
inline StyleReport run_audit(const AuditConfig& config) {
  config.validate();
  StyleReport report;

  LoadResult loaded;
  try {
    loaded = load_pairs(config.pairs);
  } catch (const CorpusError& e) {
    throw AuditError(e.what());
  }
  if (!loaded.rejects.empty()) report.skipped_items["pairs: rejected lines"] = loaded.rejects.size();
  const Corpus& corpus = loaded.corpus;
  if (corpus.records.empty()) throw AuditError("no valid pairs in " + config.pairs);

  std::unordered_map<std::string, const std::string*> abstracts;
  for (const auto& rec : corpus.records) abstracts.try_emplace(rec.doi, &rec.abstract);

  // Sources: models in order of first appearance, then Human, then Abstract.
  std::vector<GenerationRecord> generations;
  for (const auto& path : config.generations) {
    try {
      auto recs = load_generations(path);
      generations.insert(generations.end(), std::make_move_iterator(recs.begin()), std::make_move_iterator(recs.end()));
    } catch (const std::exception& e) {
      throw AuditError(e.what());
    }
  }
  std::vector<detail::SourceTexts> sources;
  {
    std::unordered_map<std::string, std::size_t> model_index;
    std::map<std::pair<std::string, std::string>, int> seen;
    for (const auto& g : generations) {
      if (!abstracts.contains(g.doi)) {
        ++report.skipped_items["generations: DOI not in pairs"];
        continue;
      }
      auto [it, inserted] = model_index.try_emplace(g.model, sources.size());
      if (inserted) sources.push_back({g.model, SourceKind::Model, {}, {}, {}, {}, {}});
      auto& s = sources[it->second];
      s.texts.push_back(g.summary_text);
      s.dois.push_back(g.doi);
      s.summary_index.push_back(seen[{g.model, g.doi}]++);
      s.candidate_ids.push_back(g.candidate_id);
      s.generations.push_back(&g);
    }
    detail::SourceTexts human{std::string(kHumanRow), SourceKind::Human, {}, {}, {}, {}, {}};
    detail::SourceTexts abstract{std::string(kAbstractRow), SourceKind::Abstract, {}, {}, {}, {}, {}};
    std::unordered_map<std::string, int> per_doi;
    for (std::size_t i = 0; i < corpus.records.size(); ++i) {
      const auto& rec = corpus.records[i];
      if (!rec.is_human()) {
        ++report.skipped_items["pairs: non-human summary_source"];
        continue;
      }
      human.texts.push_back(rec.summary);
      human.dois.push_back(rec.doi);
      human.summary_index.push_back(per_doi[rec.doi]++);
      human.candidate_ids.push_back("human:" + rec.doi + ":" + std::to_string(i));
      abstract.texts.push_back(rec.abstract);
      abstract.dois.push_back(rec.doi);
      abstract.summary_index.push_back(0);
      abstract.candidate_ids.push_back("abstract:" + rec.doi + ":" + std::to_string(i));
    }
    if (human.texts.empty()) throw AuditError("no human summaries in " + config.pairs);
    sources.push_back(std::move(human));
    sources.push_back(std::move(abstract));
  }

  const auto groups = group_by_paper(corpus);
  report.annotation_counts = annotation_count_histogram(groups);

  // Few-shot training summaries for the copy rate.
  std::vector<std::string> train;
  if (corpus.records.size() > kFewShotSize) {
    const auto split = split_few_shot(corpus, config.split_seed);
    for (auto i : split.few_shot) train.push_back(split.records[i].summary);
  } else {
    report.warnings.push_back("copy rate: fewer than 6 pairs, no few-shot split");
  }

  std::unordered_map<std::string, EntitySpans> spans;
  if (!config.spans.empty()) {
    try {
      for (auto& rec : load_entity_records(config.spans)) {
        const auto role = rec.text_role;
        const auto source = rec.text_role == "abstract" ? std::string("abstract") : rec.source;
        spans[detail::entity_key(source, role, rec.doi, rec.text_role == "abstract" ? 0 : rec.summary_index)] =
            std::move(rec.spans);
      }
    } catch (const std::exception& e) {
      throw AuditError(e.what());
    }
  }

  std::unordered_map<std::string, RoleCountTable> role_tables;
  if (config.rhetoric && !config.roles.empty()) {
    try {
      for (const auto& [doi, tagged] : load_role_records(config.roles)) role_tables.emplace(doi, build_role_counts(tagged));
    } catch (const std::exception& e) {
      throw AuditError(e.what());
    }
  }
  const bool do_heatmaps = config.rhetoric && !config.roles.empty();
  if (!config.lengths) report.skipped_sections["statistics"] = "disabled";
  if (!config.readability) {
    report.skipped_sections["readability"] = "disabled";
    report.skipped_sections["significance"] = "disabled";
  }
  if (!config.novelty) report.skipped_sections["novelty"] = "disabled";
  if (!config.references) report.skipped_sections["references"] = "disabled";
  if (!config.rhetoric) report.skipped_sections["heatmaps"] = "disabled";
  else if (config.roles.empty()) report.skipped_sections["heatmaps"] = "no roles input";

  std::vector<std::array<std::vector<double>, 7>> per_metric(sources.size());

  for (std::size_t si = 0; si < sources.size(); ++si) {
    const auto& src = sources[si];
    SourceRow row;
    row.name = src.name;
    row.kind = src.kind;
    row.texts = src.texts.size();

    if (config.lengths) {
      row.length = length_stats(src.texts);
      if (!train.empty() && src.kind == SourceKind::Model) row.copy_rate = copy_rate_stats(src.texts, train);
      if (!config.spans.empty()) {
        std::vector<double> densities;
        const std::string source_key = src.kind == SourceKind::Abstract ? "abstract"
                                       : src.kind == SourceKind::Human  ? std::string(kHumanSource)
                                                                        : src.name;
        const std::string role = src.kind == SourceKind::Abstract ? "abstract" : "summary";
        for (std::size_t i = 0; i < src.texts.size(); ++i) {
          const auto it = spans.find(detail::entity_key(source_key, role, src.dois[i], src.summary_index[i]));
          if (it == spans.end()) {
            if (src.kind != SourceKind::Model) ++report.skipped_items["spans: text without spans"];
            continue;
          }
          try {
            densities.push_back(entity_density(src.texts[i], it->second));
          } catch (const MetricError&) {
            ++report.skipped_items["spans: invalid offsets"];
          }
        }
        if (!densities.empty()) row.entity_density = mean_sd(densities);
      }
    }

    std::vector<detail::PerText> per(src.texts.size());
    detail::parallel_for(src.texts.size(), config.threads, [&](std::size_t i) {
      auto& out = per[i];
      const auto& text = src.texts[i];
      if (config.readability) {
        try {
          out.readability = readability_scores(text);
        } catch (const MetricError&) {
        }
      }
      if (config.novelty && src.kind != SourceKind::Abstract) {
        const auto& abs = *abstracts.at(src.dois[i]);
        for (int n = 1; n <= 3; ++n) out.novel[static_cast<std::size_t>(n - 1)] = novel_ngram_fraction(text, abs, n);
      }
      if (do_heatmaps) {
        const auto t = role_tables.find(src.dois[i]);
        if (t == role_tables.end()) {
          out.heatmap_missing_roles = true;
        } else if (word_count(text) > 0) {
          out.heatmap = summary_heatmap(text, t->second);
        }
      }
    });

    if (config.readability) {
      ReadabilityScores sum;
      std::array<double, 7> acc{};
      std::size_t n = 0;
      for (const auto& p : per) {
        if (!p.readability) {
          ++report.skipped_items["readability: text without a word or sentence"];
          continue;
        }
        for (std::size_t m = 0; m < 7; ++m) {
          acc[m] += (*p.readability)[m];
          per_metric[si][m].push_back((*p.readability)[m]);
        }
        ++n;
      }
      if (n > 0) {
        const auto d = static_cast<double>(n);
        sum = {acc[0] / d, acc[1] / d, acc[2] / d, acc[3] / d, acc[4] / d, acc[5] / d, acc[6] / d};
        row.readability = sum;
      }
    }
    if (config.novelty && src.kind != SourceKind::Abstract) {
      for (std::size_t k = 0; k < 3; ++k) {
        std::vector<double> v;
        for (const auto& p : per) {
          if (p.novel[k]) v.push_back(*p.novel[k]);
        }
        if (!v.empty()) row.novel[k] = mean_sd(v);
      }
    }
    if (do_heatmaps) {
      HeatmapAccumulator acc;
      std::vector<SummaryWithTable> items;
      for (std::size_t i = 0; i < per.size(); ++i) {
        if (per[i].heatmap_missing_roles) {
          ++report.skipped_items["roles: DOI without labels"];
          continue;
        }
        if (!per[i].heatmap) continue;
        acc.add(*per[i].heatmap);
        items.push_back({src.texts[i], &role_tables.at(src.dois[i])});
      }
      if (acc.size() > 0) row.heatmap = acc.result();
      row.top_novel = top_novel_words(items, config.top_novel_cutoff, config.top_novel_k);
    }
    if (src.kind == SourceKind::Model) {
      for (auto f : {DegenerateFlag::Repetition, DegenerateFlag::LeakedReasoning, DegenerateFlag::Overlong}) {
        row.degenerate[std::string(degenerate_flag_name(f))] = 0;
      }
      for (const auto* g : src.generations) {
        for (auto f : g->degenerate_flags) ++row.degenerate[std::string(degenerate_flag_name(f))];
      }
    }
    report.rows.push_back(std::move(row));
  }

  // Mann-Whitney U: each summary source against the abstracts.
  if (config.readability) {
    const auto& abs_samples = per_metric.back();
    const auto names = ReadabilityScores::names();
    for (std::size_t si = 0; si + 1 < sources.size(); ++si) {
      for (std::size_t m = 0; m < 7; ++m) {
        if (per_metric[si][m].empty() || abs_samples[m].empty()) continue;
        report.significance.push_back({sources[si].name, std::string(names[m]), per_metric[si][m].size(),
                                       abs_samples[m].size(), mann_whitney_u(per_metric[si][m], abs_samples[m])});
      }
    }
  }

  if (config.references) {
    RefMetricOptions opts;
    opts.bleu_mode = config.bleu_mode;
    opts.bleu.epsilon = config.bleu_epsilon;
    std::unordered_map<std::string, SemanticScore> sem_human, sem_abstract;
    try {
      if (!config.semantic_human.empty()) sem_human = load_semantic_scores(config.semantic_human);
      if (!config.semantic_abstract.empty()) sem_abstract = load_semantic_scores(config.semantic_abstract);
    } catch (const std::exception& e) {
      throw AuditError(e.what());
    }
    std::unordered_map<std::string, std::vector<std::string>> human_refs, abstract_refs;
    for (const auto& rec : corpus.records) {
      if (!rec.is_human()) continue;
      human_refs[rec.doi].push_back(rec.summary);
      abstract_refs.try_emplace(rec.doi, std::vector<std::string>{rec.abstract});
    }
    const auto* hs = config.semantic_human.empty() ? nullptr : &sem_human;
    const auto* as = config.semantic_abstract.empty() ? nullptr : &sem_abstract;
    for (std::size_t si = 0; si < sources.size(); ++si) {
      const auto& src = sources[si];
      auto& row = report.rows[si];
      if (src.kind == SourceKind::Abstract) continue;
      std::vector<Candidate> cands;
      for (std::size_t i = 0; i < src.texts.size(); ++i) cands.push_back({src.dois[i], src.texts[i], src.candidate_ids[i]});
      try {
        row.abstract_referenced = evaluate_model(cands, abstract_refs, as, opts);
      } catch (const RefMetricError& e) {
        report.warnings.push_back(src.name + " abstract-referenced: " + e.what());
      }
      if (src.kind == SourceKind::Model) {
        try {
          row.human_referenced = evaluate_model(cands, human_refs, hs, opts);
        } catch (const RefMetricError& e) {
          report.warnings.push_back(src.name + " human-referenced: " + e.what());
        }
      } else {
        try {
          row.human_referenced = human_cross_baseline(groups, {config.baseline_iterations, config.baseline_seed}, opts);
        } catch (const RefMetricError& e) {
          report.warnings.push_back(std::string("human baseline: ") + e.what());
        }
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Emission
//
// Statistics, readability and novelty tables round to 2 decimals; reference
// metrics to 4 (printf rounding of the in-memory double; "-0.00" prints as
// "0.00"). Absent values are blank.

inline std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s(buf);
  if (s[0] == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

inline std::string format_optional(const std::optional<double>& v, int decimals) {
  return v ? format_fixed(*v, decimals) : std::string();
}

namespace detail {

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

inline std::string md_cell(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += '\\';
    out += c == '\n' ? ' ' : c;
  }
  return out;
}

using Cells = std::vector<std::string>;

struct Table {
  Cells csv_header;
  std::vector<Cells> csv_rows;
  Cells md_header;
  std::vector<Cells> md_rows;
};

inline void write_text(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw AuditError("cannot write " + path.string());
  out << body;
  if (!out) throw AuditError("cannot write " + path.string());
}

inline std::string render_csv(const Table& t) {
  std::string out;
  auto line = [&](const Cells& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += csv_field(cells[i]);
    }
    out += '\n';
  };
  line(t.csv_header);
  for (const auto& r : t.csv_rows) line(r);
  return out;
}

inline std::string render_md_rows(const Cells& header, const std::vector<Cells>& rows) {
  std::string out;
  auto line = [&](const Cells& cells) {
    out += '|';
    for (const auto& c : cells) out += ' ' + md_cell(c) + " |";
    out += '\n';
  };
  line(header);
  out += '|';
  for (std::size_t i = 0; i < header.size(); ++i) out += i == 0 ? " --- |" : " ---: |";
  out += '\n';
  for (const auto& r : rows) line(r);
  return out;
}

inline std::string pm(const std::optional<MeanSd>& v) {
  return v ? format_fixed(v->mean, 2) + " ± " + format_fixed(v->sd, 2) : std::string();
}

inline Table statistics_table(const StyleReport& r) {
  Table t;
  t.csv_header = {"model",
                  "words_mean",
                  "words_sd",
                  "sentences_mean",
                  "sentences_sd",
                  "words_per_sentence_mean",
                  "words_per_sentence_sd",
                  "nes_per_100_words_mean",
                  "nes_per_100_words_sd",
                  "copy_rate_zero_pct",
                  "copy_rate_gt10_pct",
                  "copy_rate_max"};
  t.md_header = {"Model", "Words", "Sentences", "Words/sent.", "NEs per 100 words", "Copy =0%", "Copy >10%", "Copy max"};
  for (const auto& row : r.rows) {
    if (!row.length) continue;
    const auto& l = *row.length;
    auto f = [](double v) { return format_fixed(v, 2); };
    Cells c{row.name, f(l.mean_words), f(l.sd_words), f(l.mean_sentences), f(l.sd_sentences), f(l.mean_words_per_sentence),
            f(l.sd_words_per_sentence)};
    Cells m{row.name, pm(MeanSd{l.mean_words, l.sd_words}), pm(MeanSd{l.mean_sentences, l.sd_sentences}),
            pm(MeanSd{l.mean_words_per_sentence, l.sd_words_per_sentence})};
    if (row.entity_density) {
      c.push_back(f(row.entity_density->mean));
      c.push_back(f(row.entity_density->sd));
      m.push_back(pm(row.entity_density));
    } else {
      c.insert(c.end(), {"", ""});
      m.push_back("");
    }
    if (row.copy_rate) {
      for (double v : {row.copy_rate->pct_zero, row.copy_rate->pct_gt10, row.copy_rate->max_rate}) {
        c.push_back(f(v));
        m.push_back(f(v));
      }
    } else {
      c.insert(c.end(), {"", "", ""});
      m.insert(m.end(), {"", "", ""});
    }
    t.csv_rows.push_back(std::move(c));
    t.md_rows.push_back(std::move(m));
  }
  return t;
}

inline Table readability_table(const StyleReport& r) {
  Table t;
  t.csv_header = {"model"};
  t.md_header = {"Model"};
  for (auto n : ReadabilityScores::names()) {
    t.csv_header.emplace_back(n);
    t.md_header.emplace_back(n);
  }
  for (const auto& row : r.rows) {
    if (!row.readability) continue;
    Cells c{row.name};
    for (std::size_t m = 0; m < 7; ++m) c.push_back(format_fixed((*row.readability)[m], 2));
    t.csv_rows.push_back(c);
    t.md_rows.push_back(std::move(c));
  }
  return t;
}

inline Table novelty_table(const StyleReport& r) {
  Table t;
  t.csv_header = {"model", "novel_1_mean", "novel_1_sd", "novel_2_mean", "novel_2_sd", "novel_3_mean", "novel_3_sd"};
  t.md_header = {"Model", "n=1 (%)", "n=2 (%)", "n=3 (%)"};
  for (const auto& row : r.rows) {
    if (row.kind == SourceKind::Abstract) continue;
    if (!row.novel[0] && !row.novel[1] && !row.novel[2]) continue;
    Cells c{row.name}, m{row.name};
    for (const auto& v : row.novel) {
      c.push_back(v ? format_fixed(v->mean, 2) : "");
      c.push_back(v ? format_fixed(v->sd, 2) : "");
      m.push_back(pm(v));
    }
    t.csv_rows.push_back(std::move(c));
    t.md_rows.push_back(std::move(m));
  }
  return t;
}

inline Cells metric_cells(const MetricRow& m) {
  auto f = [](double v) { return format_fixed(v, 4); };
  return {f(m.bleu),
          f(m.rouge1),
          f(m.rouge2),
          f(m.rougeL),
          f(m.meteor),
          format_optional(m.bertscore_like, 4),
          format_optional(m.moverscore_like, 4)};
}

// Rows for one reference setting, in report row order.
inline std::vector<std::pair<std::string, const MetricRow*>> reference_rows(const StyleReport& r, bool human_ref) {
  std::vector<std::pair<std::string, const MetricRow*>> out;
  for (const auto& row : r.rows) {
    const auto& m = human_ref ? row.human_referenced : row.abstract_referenced;
    if (m) out.emplace_back(row.name, &*m);
  }
  return out;
}

inline Table reference_table(const StyleReport& r) {
  Table t;
  t.csv_header = {"reference", "model", "bleu", "rouge1", "rouge2", "rougeL", "meteor", "bertscore", "moverscore", "pairs"};
  t.md_header = {"Model", "BLEU", "ROUGE-1", "ROUGE-2", "ROUGE-L", "METEOR", "BERTScore", "MoverScore"};
  for (bool human_ref : {true, false}) {
    for (const auto& [name, m] : reference_rows(r, human_ref)) {
      Cells c{human_ref ? "human" : "abstract", name};
      for (auto& cell : metric_cells(*m)) c.push_back(std::move(cell));
      c.push_back(std::to_string(m->pairs));
      t.csv_rows.push_back(std::move(c));
    }
  }
  return t;
}

inline std::string reference_markdown(const StyleReport& r, const Table& t) {
  std::string out = "# Reference-based metrics\n";
  for (bool human_ref : {true, false}) {
    out += human_ref ? "\n## Human-referenced\n\n" : "\n## Abstract-referenced\n\n";
    std::vector<Cells> rows;
    for (const auto& [name, m] : reference_rows(r, human_ref)) {
      Cells c{name};
      for (auto& cell : metric_cells(*m)) c.push_back(std::move(cell));
      rows.push_back(std::move(c));
    }
    out += render_md_rows(t.md_header, rows);
  }
  return out;
}

inline std::string slug(std::string_view name) {
  std::string out;
  for (char c : name) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      out += static_cast<char>(std::tolower(u));
    } else if (!out.empty() && out.back() != '-') {
      out += '-';
    }
  }
  while (!out.empty() && out.back() == '-') out.pop_back();
  return out.empty() ? "source" : out;
}

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace detail

/// Colour for a probability in [0, 1]: white to dark blue, linear per channel.
inline std::string heat_color(double v) {
  v = std::clamp(v, 0.0, 1.0);
  auto channel = [v](int lo, int hi) { return static_cast<int>(std::lround(lo + (hi - lo) * v)); };
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", channel(255, 8), channel(255, 48), channel(255, 107));
  return buf;
}

/// Heatmap SVG: roles on rows, position bins on columns. Bins without
/// words are left unfilled.
inline std::string render_heatmap_svg(const PositionHeatmap& hm, std::string_view title) {
  constexpr int kCellW = 28, kCellH = 24, kLeft = 120, kTop = 36;
  const int width = kLeft + kCellW * static_cast<int>(kPositionBins) + 10;
  const int height = kTop + kCellH * static_cast<int>(kAllRoles) + 40;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<text x=\"" << kLeft << "\" y=\"20\" font-size=\"13\">" << detail::xml_escape(title) << "</text>\n";
  for (std::size_t r = 0; r < kAllRoles; ++r) {
    const int y = kTop + static_cast<int>(r) * kCellH;
    svg << "<text x=\"" << kLeft - 6 << "\" y=\"" << y + kCellH / 2 + 4 << "\" text-anchor=\"end\">" << kRoleNames[r]
        << "</text>\n";
    for (std::size_t b = 0; b < kPositionBins; ++b) {
      const int x = kLeft + static_cast<int>(b) * kCellW;
      const auto fill = hm.counts[b] == 0 ? std::string("none") : heat_color(hm.cells[r][b]);
      svg << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << kCellW << "\" height=\"" << kCellH << "\" fill=\""
          << fill << "\" stroke=\"#cccccc\" data-role=\"" << kRoleNames[r] << "\" data-bin=\"" << b << "\"/>\n";
    }
  }
  const int axis_y = kTop + static_cast<int>(kAllRoles) * kCellH + 14;
  for (std::size_t b = 0; b < kPositionBins; b += 2) {
    svg << "<text x=\"" << kLeft + static_cast<int>(b) * kCellW + kCellW / 2 << "\" y=\"" << axis_y
        << "\" text-anchor=\"middle\">" << b * 5 << "%</text>\n";
  }
  svg << "<text x=\"" << kLeft + kCellW * static_cast<int>(kPositionBins) / 2 << "\" y=\"" << axis_y + 18
      << "\" text-anchor=\"middle\">relative position in summary</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

/// Writes heatmap_<slug>.csv and heatmap_<slug>.svg; returns both paths.
inline std::vector<std::filesystem::path> emit_heatmap(const PositionHeatmap& hm, const std::filesystem::path& dir,
                                                       std::string_view name) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  const auto stem = "heatmap_" + detail::slug(name);
  std::ostringstream csv;
  write_heatmap_csv(csv, hm);
  const auto csv_path = dir / (stem + ".csv");
  const auto svg_path = dir / (stem + ".svg");
  detail::write_text(csv_path, csv.str());
  detail::write_text(svg_path, render_heatmap_svg(hm, name));
  return {csv_path, svg_path};
}

/// Bar chart of papers per annotation count.
inline std::string render_histogram_svg(std::span<const std::size_t> counts, std::string_view title) {
  constexpr int kBarW = 36, kLeft = 60, kTop = 36, kPlotH = 200;
  const int width = kLeft + kBarW * static_cast<int>(std::max<std::size_t>(counts.size(), 1)) + 20;
  const int height = kTop + kPlotH + 50;
  std::size_t peak = 1;
  for (auto c : counts) peak = std::max(peak, c);
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<text x=\"" << kLeft << "\" y=\"20\" font-size=\"13\">" << detail::xml_escape(title) << "</text>\n";
  for (std::size_t k = 0; k < counts.size(); ++k) {
    const int h = static_cast<int>(std::lround(static_cast<double>(kPlotH) * static_cast<double>(counts[k]) /
                                               static_cast<double>(peak)));
    const int x = kLeft + static_cast<int>(k) * kBarW;
    svg << "<rect x=\"" << x + 4 << "\" y=\"" << kTop + kPlotH - h << "\" width=\"" << kBarW - 8 << "\" height=\"" << h
        << "\" fill=\"#3b6ea8\"/>\n";
    svg << "<text x=\"" << x + kBarW / 2 << "\" y=\"" << kTop + kPlotH - h - 4 << "\" text-anchor=\"middle\">"
        << counts[k] << "</text>\n";
    svg << "<text x=\"" << x + kBarW / 2 << "\" y=\"" << kTop + kPlotH + 16 << "\" text-anchor=\"middle\">" << k + 1
        << "</text>\n";
  }
  svg << "<text x=\"" << kLeft << "\" y=\"" << kTop + kPlotH + 36 << "\">summaries per paper</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

/// Writes every table, figure and the run summary into `dir`. Returns the
/// written paths in a fixed order.
inline std::vector<std::filesystem::path> emit_tables(const StyleReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (!std::filesystem::is_directory(dir)) throw AuditError("cannot create output directory " + dir.string());
  std::vector<std::filesystem::path> written;
  auto put = [&](const std::string& name, const std::string& body) {
    detail::write_text(dir / name, body);
    written.push_back(dir / name);
  };
  auto section = [&](const std::string& key, const std::string& stem, const std::string& title, const detail::Table& t,
                     const std::string* md_override = nullptr) {
    if (auto it = report.skipped_sections.find(key); it != report.skipped_sections.end()) {
      put(stem + ".md", "# " + title + "\n\n_Skipped: " + it->second + "_\n");
      return;
    }
    put(stem + ".csv", detail::render_csv(t));
    put(stem + ".md", md_override ? *md_override : "# " + title + "\n\n" + detail::render_md_rows(t.md_header, t.md_rows));
  };

  section("statistics", "statistics", "Summary statistics", detail::statistics_table(report));
  section("readability", "readability", "Readability", detail::readability_table(report));
  section("novelty", "novel_ngrams", "Novel n-grams", detail::novelty_table(report));
  const auto ref = detail::reference_table(report);
  const auto ref_md = detail::reference_markdown(report, ref);
  section("references", "reference_metrics", "Reference-based metrics", ref, &ref_md);

  if (!report.skipped_sections.contains("significance")) {
    std::string csv = "source,metric,n_source,n_abstract,u_source,u_abstract,p,exact\n";
    for (const auto& s : report.significance) {
      char p[32];
      std::snprintf(p, sizeof p, "%.6g", s.result.p);
      csv += detail::csv_field(s.source) + ',' + s.metric + ',' + std::to_string(s.n_source) + ',' +
             std::to_string(s.n_abstract) + ',' + format_fixed(s.result.u_a, 1) + ',' + format_fixed(s.result.u_b, 1) +
             ',' + p + ',' + (s.result.exact ? "true" : "false") + '\n';
    }
    put("significance_vs_abstract.csv", csv);
  }

  if (!report.skipped_sections.contains("heatmaps")) {
    std::string words = "source,rank,word,count\n";
    for (const auto& row : report.rows) {
      if (row.heatmap) {
        for (auto& p : emit_heatmap(*row.heatmap, dir, row.name)) written.push_back(p);
      }
      for (std::size_t i = 0; i < row.top_novel.size(); ++i) {
        words += detail::csv_field(row.name) + ',' + std::to_string(i + 1) + ',' +
                 detail::csv_field(row.top_novel[i].first) + ',' + std::to_string(row.top_novel[i].second) + '\n';
      }
    }
    put("top_novel_words.csv", words);
  }

  std::string hist = "summaries_per_paper,papers\n";
  for (std::size_t k = 0; k < report.annotation_counts.size(); ++k) {
    hist += std::to_string(k + 1) + ',' + std::to_string(report.annotation_counts[k]) + '\n';
  }
  put("annotation_counts.csv", hist);
  put("annotation_counts.svg", render_histogram_svg(report.annotation_counts, "Papers by number of summaries"));

  std::string degenerate = "model,generations,repetition,leaked_reasoning,overlong\n";
  bool any_model = false;
  for (const auto& row : report.rows) {
    if (row.kind != SourceKind::Model) continue;
    any_model = true;
    degenerate += detail::csv_field(row.name) + ',' + std::to_string(row.texts);
    for (const char* f : {"repetition", "leaked_reasoning", "overlong"}) {
      const auto it = row.degenerate.find(f);
      degenerate += ',' + std::to_string(it == row.degenerate.end() ? 0 : it->second);
    }
    degenerate += '\n';
  }
  if (any_model) put("degenerate_flags.csv", degenerate);

  nlohmann::ordered_json summary;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& row : report.rows) rows.push_back({{"name", row.name}, {"texts", row.texts}});
  summary["rows"] = rows;
  summary["skipped_sections"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : report.skipped_sections) summary["skipped_sections"][k] = v;
  summary["skipped_items"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : report.skipped_items) summary["skipped_items"][k] = v;
  summary["warnings"] = report.warnings;
  summary["partial"] = report.partial();
  put("summary.json", summary.dump(2) + "\n");
  return written;
}

}  // namespace tldr
