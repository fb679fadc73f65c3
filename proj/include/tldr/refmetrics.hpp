#pragma once

// Reference-based scores: BLEU-4, ROUGE-1/2/L F1, METEOR (exact and stem
// stages), the within-paper cross-referenced human baseline and per-model
// evaluation rows.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "tldr/corpus.hpp"
#include "tldr/porter_stemmer.hpp"
#include "tldr/random.hpp"
#include "tldr/tokenize.hpp"

namespace tldr {

class RefMetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::vector<std::string> metric_tokens(std::string_view text) {
  auto words = split_words(text);
  for (auto& w : words) w = fold_case(w);
  return words;
}

namespace detail {

inline std::vector<std::string> nonempty_tokens(std::string_view text, const char* what) {
  auto t = metric_tokens(text);
  if (t.empty()) throw RefMetricError(std::string(what) + " has no words");
  return t;
}

inline std::unordered_map<std::string, std::size_t> ngram_counts(std::span<const std::string> tokens, int n) {
  std::unordered_map<std::string, std::size_t> counts;
  for (auto& k : ngram_keys(tokens, n)) ++counts[std::move(k)];
  return counts;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// BLEU

inline constexpr int kBleuOrder = 4;

struct BleuOptions {
  // Precision used for an order with no matches: epsilon / max(total, 1).
  double epsilon = 0.01;
};

/// Sufficient statistics of one candidate; summing them gives corpus BLEU.
struct BleuStats {
  std::array<double, kBleuOrder> matches{};
  std::array<double, kBleuOrder> totals{};
  double candidate_length = 0;
  double reference_length = 0;  // closest reference length, ties to the shorter

  BleuStats& operator+=(const BleuStats& o) {
    for (int n = 0; n < kBleuOrder; ++n) {
      matches[n] += o.matches[n];
      totals[n] += o.totals[n];
    }
    candidate_length += o.candidate_length;
    reference_length += o.reference_length;
    return *this;
  }
};

inline BleuStats bleu_stats(std::span<const std::string> candidate,
                            std::span<const std::vector<std::string>> references) {
  BleuStats s;
  s.candidate_length = static_cast<double>(candidate.size());
  std::size_t best_diff = SIZE_MAX;
  for (const auto& ref : references) {
    const std::size_t diff = ref.size() > candidate.size() ? ref.size() - candidate.size() : candidate.size() - ref.size();
    if (diff < best_diff || (diff == best_diff && static_cast<double>(ref.size()) < s.reference_length)) {
      best_diff = diff;
      s.reference_length = static_cast<double>(ref.size());
    }
  }
  for (int n = 1; n <= kBleuOrder; ++n) {
    const auto cand = detail::ngram_counts(candidate, n);
    std::unordered_map<std::string, std::size_t> max_ref;
    for (const auto& ref : references) {
      for (const auto& [k, c] : detail::ngram_counts(ref, n)) max_ref[k] = std::max(max_ref[k], c);
    }
    double matched = 0, total = 0;
    for (const auto& [k, c] : cand) {
      total += static_cast<double>(c);
      if (auto it = max_ref.find(k); it != max_ref.end()) matched += static_cast<double>(std::min(c, it->second));
    }
    s.matches[n - 1] = matched;
    s.totals[n - 1] = total;
  }
  return s;
}

inline double bleu_from_stats(const BleuStats& s, const BleuOptions& opts = {}) {
  if (s.candidate_length <= 0) throw RefMetricError("bleu: empty candidate");
  double log_sum = 0.0;
  for (int n = 0; n < kBleuOrder; ++n) {
    const double p = s.matches[n] > 0 ? s.matches[n] / s.totals[n] : opts.epsilon / std::max(s.totals[n], 1.0);
    log_sum += std::log(p) / kBleuOrder;
  }
  const double bp = s.candidate_length > s.reference_length ? 1.0 : std::exp(1.0 - s.reference_length / s.candidate_length);
  return bp * std::exp(log_sum);
}

/// Sentence BLEU-4 against one or more references.
inline double bleu(std::string_view candidate, std::span<const std::string> references, const BleuOptions& opts = {}) {
  if (references.empty()) throw RefMetricError("bleu: no references");
  const auto cand = detail::nonempty_tokens(candidate, "bleu candidate");
  std::vector<std::vector<std::string>> refs;
  for (const auto& r : references) refs.push_back(detail::nonempty_tokens(r, "bleu reference"));
  return bleu_from_stats(bleu_stats(cand, refs), opts);
}

// ---------------------------------------------------------------------------
// ROUGE

struct RougeScores {
  double rouge1 = 0;
  double rouge2 = 0;
  double rougeL = 0;
};

namespace detail {

inline double f1(double overlap, double cand_total, double ref_total) {
  if (overlap <= 0 || cand_total <= 0 || ref_total <= 0) return 0.0;
  const double p = overlap / cand_total, r = overlap / ref_total;
  return 2.0 * p * r / (p + r);
}

inline double rouge_n(std::span<const std::string> cand, std::span<const std::string> ref, int n) {
  const auto c = ngram_counts(cand, n), r = ngram_counts(ref, n);
  double overlap = 0, ct = 0, rt = 0;
  for (const auto& [k, v] : c) {
    ct += static_cast<double>(v);
    if (auto it = r.find(k); it != r.end()) overlap += static_cast<double>(std::min(v, it->second));
  }
  for (const auto& [k, v] : r) rt += static_cast<double>(v);
  return f1(overlap, ct, rt);
}

inline std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline RougeScores rouge_tokens(std::span<const std::string> cand, std::span<const std::string> ref) {
  RougeScores s;
  s.rouge1 = rouge_n(cand, ref, 1);
  s.rouge2 = rouge_n(cand, ref, 2);
  s.rougeL = f1(static_cast<double>(lcs_length(cand, ref)), static_cast<double>(cand.size()),
                static_cast<double>(ref.size()));
  return s;
}

}  // namespace detail

/// F1 ROUGE-1, ROUGE-2 (clipped n-gram counts) and ROUGE-L (LCS); case
/// folded, no stemming. A side without bigrams scores ROUGE-2 = 0.
inline RougeScores rouge_f1(std::string_view candidate, std::string_view reference) {
  const auto c = detail::nonempty_tokens(candidate, "rouge candidate");
  const auto r = detail::nonempty_tokens(reference, "rouge reference");
  return detail::rouge_tokens(c, r);
}

// ---------------------------------------------------------------------------
// METEOR

struct MeteorParams {
  double alpha = 0.9;
  double beta = 3.0;
  double gamma = 0.5;
};

struct MeteorAlignment {
  std::vector<int> ref_of;  // candidate index -> reference index or -1
  std::size_t matches = 0;
  std::size_t chunks = 0;
};

namespace detail {

// One matching stage over the still-unaligned tokens. Candidates are
// visited left to right; among equal reference tokens the one continuing the
// neighbouring alignment is preferred, otherwise the leftmost.
inline void meteor_stage(std::span<const std::string> cand_keys, std::span<const std::string> ref_keys,
                         std::vector<int>& ref_of, std::vector<bool>& ref_used) {
  for (std::size_t i = 0; i < cand_keys.size(); ++i) {
    if (ref_of[i] >= 0) continue;
    int chosen = -1;
    for (std::size_t j = 0; j < ref_keys.size(); ++j) {
      if (ref_used[j] || ref_keys[j] != cand_keys[i]) continue;
      const bool continues = (i > 0 && ref_of[i - 1] >= 0 && static_cast<std::size_t>(ref_of[i - 1]) + 1 == j) ||
                             (i + 1 < cand_keys.size() && ref_of[i + 1] >= 0 && static_cast<std::size_t>(ref_of[i + 1]) == j + 1);
      if (continues) {
        chosen = static_cast<int>(j);
        break;
      }
      if (chosen < 0) chosen = static_cast<int>(j);
    }
    if (chosen >= 0) {
      ref_of[i] = chosen;
      ref_used[static_cast<std::size_t>(chosen)] = true;
    }
  }
}

}  // namespace detail

inline MeteorAlignment meteor_align(std::span<const std::string> cand, std::span<const std::string> ref) {
  MeteorAlignment a;
  a.ref_of.assign(cand.size(), -1);
  std::vector<bool> ref_used(ref.size(), false);
  detail::meteor_stage(cand, ref, a.ref_of, ref_used);
  std::vector<std::string> cand_stems, ref_stems;
  for (const auto& t : cand) cand_stems.push_back(porter_stem(t));
  for (const auto& t : ref) ref_stems.push_back(porter_stem(t));
  detail::meteor_stage(cand_stems, ref_stems, a.ref_of, ref_used);

  int prev = -2;
  bool prev_matched = false;
  for (int j : a.ref_of) {
    if (j < 0) {
      prev_matched = false;
      continue;
    }
    ++a.matches;
    if (!(prev_matched && j == prev + 1)) ++a.chunks;
    prev = j;
    prev_matched = true;
  }
  return a;
}

/// METEOR = Fmean * (1 - gamma * (chunks / matches)^beta) with
/// Fmean = P R / (alpha P + (1 - alpha) R). No synonym stage.
inline double meteor(std::string_view candidate, std::string_view reference, const MeteorParams& params = {}) {
  const auto c = detail::nonempty_tokens(candidate, "meteor candidate");
  const auto r = detail::nonempty_tokens(reference, "meteor reference");
  const auto a = meteor_align(c, r);
  if (a.matches == 0) return 0.0;
  const double m = static_cast<double>(a.matches);
  const double p = m / static_cast<double>(c.size()), rec = m / static_cast<double>(r.size());
  const double fmean = p * rec / (params.alpha * p + (1.0 - params.alpha) * rec);
  const double penalty = params.gamma * std::pow(static_cast<double>(a.chunks) / m, params.beta);
  return fmean * (1.0 - penalty);
}

// ---------------------------------------------------------------------------
// Rows

struct MetricRow {
  double bleu = 0;
  double rouge1 = 0;
  double rouge2 = 0;
  double rougeL = 0;
  double meteor = 0;
  std::optional<double> bertscore_like;
  std::optional<double> moverscore_like;
  std::size_t pairs = 0;  // scored (candidate, reference set) pairs
};

enum class BleuMode { SentenceMean, Corpus };

struct RefMetricOptions {
  BleuMode bleu_mode = BleuMode::SentenceMean;
  BleuOptions bleu;
  MeteorParams meteor;
};

namespace detail {

struct PairScores {
  double rouge1, rouge2, rougeL, meteor;
};

// Multiple references: each metric takes its maximum over the references.
inline PairScores score_against(std::span<const std::string> cand, std::span<const std::vector<std::string>> refs,
                                const MeteorParams& mp) {
  PairScores best{0, 0, 0, 0};
  for (const auto& ref : refs) {
    const auto r = rouge_tokens(cand, ref);
    best.rouge1 = std::max(best.rouge1, r.rouge1);
    best.rouge2 = std::max(best.rouge2, r.rouge2);
    best.rougeL = std::max(best.rougeL, r.rougeL);
    const auto a = meteor_align(cand, ref);
    if (a.matches > 0) {
      const double m = static_cast<double>(a.matches);
      const double p = m / static_cast<double>(cand.size()), rec = m / static_cast<double>(ref.size());
      const double fmean = p * rec / (mp.alpha * p + (1.0 - mp.alpha) * rec);
      best.meteor = std::max(best.meteor, fmean * (1.0 - mp.gamma * std::pow(static_cast<double>(a.chunks) / m, mp.beta)));
    }
  }
  return best;
}

class RowAccumulator {
 public:
  explicit RowAccumulator(const RefMetricOptions& opts) : opts_(opts) {}

  void add(std::span<const std::string> cand, std::span<const std::vector<std::string>> refs) {
    const auto stats = bleu_stats(cand, refs);
    if (opts_.bleu_mode == BleuMode::SentenceMean) {
      bleu_sum_ += bleu_from_stats(stats, opts_.bleu);
    } else {
      corpus_ += stats;
    }
    const auto s = score_against(cand, refs, opts_.meteor);
    r1_ += s.rouge1;
    r2_ += s.rouge2;
    rl_ += s.rougeL;
    meteor_ += s.meteor;
    ++n_;
  }

  std::size_t size() const { return n_; }

  MetricRow result() const {
    MetricRow row;
    if (n_ == 0) return row;
    const double n = static_cast<double>(n_);
    row.bleu = opts_.bleu_mode == BleuMode::SentenceMean ? bleu_sum_ / n : bleu_from_stats(corpus_, opts_.bleu);
    row.rouge1 = r1_ / n;
    row.rouge2 = r2_ / n;
    row.rougeL = rl_ / n;
    row.meteor = meteor_ / n;
    row.pairs = n_;
    return row;
  }

 private:
  RefMetricOptions opts_;
  double bleu_sum_ = 0, r1_ = 0, r2_ = 0, rl_ = 0, meteor_ = 0;
  BleuStats corpus_;
  std::size_t n_ = 0;
};

}  // namespace detail

struct BaselineConfig {
  int iterations = 10;
  std::uint64_t seed = 0;
};

/// Within-paper cross-referenced human baseline. Every iteration draws one
/// reference per eligible paper and scores each remaining summary against
/// it; the row is the mean over all (iteration, summary) scores. Each paper
/// draws from its own generator seeded by (seed, FNV-1a of its DOI), so the
/// result does not depend on group order.
inline MetricRow human_cross_baseline(std::span<const PaperGroup> groups, const BaselineConfig& config,
                                      const RefMetricOptions& opts = {}) {
  if (config.iterations < 1) throw RefMetricError("baseline: iterations must be >= 1");
  std::vector<const PaperGroup*> eligible;
  for (const auto& g : groups) {
    if (g.baseline_eligible()) eligible.push_back(&g);
  }
  if (eligible.empty()) throw RefMetricError("baseline: no paper has two or more summaries");
  std::sort(eligible.begin(), eligible.end(), [](const PaperGroup* a, const PaperGroup* b) { return a->doi < b->doi; });

  detail::RowAccumulator acc(opts);
  for (const auto* g : eligible) {
    std::vector<std::vector<std::string>> toks;
    for (const auto& rec : g->summaries) toks.push_back(detail::nonempty_tokens(rec.summary, "baseline summary"));
    Rng rng(mix_seed(config.seed, fnv1a64(g->doi)));
    for (int it = 0; it < config.iterations; ++it) {
      const auto ref = static_cast<std::size_t>(uniform_index(rng, toks.size()));
      const std::span<const std::vector<std::string>> refs(&toks[ref], 1);
      for (std::size_t c = 0; c < toks.size(); ++c) {
        if (c != ref) acc.add(toks[c], refs);
      }
    }
  }
  return acc.result();
}

struct Candidate {
  std::string key;           // DOI used to look up references
  std::string text;
  std::string candidate_id;  // joins sidecar semantic scores
};

struct SemanticScore {
  std::string doi;
  std::string candidate_id;
  double bertscore_like = 0;
  double moverscore_like = 0;
};

inline std::unordered_map<std::string, SemanticScore> load_semantic_scores(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw RefMetricError("cannot open " + path);
  std::unordered_map<std::string, SemanticScore> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      SemanticScore s{j.at("doi").get<std::string>(), j.at("candidate_id").get<std::string>(),
                      j.at("bertscore_like").get<double>(), j.at("moverscore_like").get<double>()};
      out[s.candidate_id] = s;
    } catch (const std::exception& e) {
      throw RefMetricError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

/// Mean per-pair metrics over candidates whose key has references. In the
/// abstract-referenced setting the abstract is the single reference.
/// Semantic columns are the mean over scored pairs that have a sidecar
/// score, and stay empty when none do.
inline MetricRow evaluate_model(std::span<const Candidate> candidates,
                                const std::unordered_map<std::string, std::vector<std::string>>& references,
                                const std::unordered_map<std::string, SemanticScore>* semantic = nullptr,
                                const RefMetricOptions& opts = {}) {
  detail::RowAccumulator acc(opts);
  double bert = 0, mover = 0;
  std::size_t semantic_n = 0;
  for (const auto& cand : candidates) {
    const auto it = references.find(cand.key);
    if (it == references.end() || it->second.empty()) continue;
    const auto ctoks = metric_tokens(cand.text);
    if (ctoks.empty()) continue;
    std::vector<std::vector<std::string>> refs;
    for (const auto& r : it->second) {
      auto t = metric_tokens(r);
      if (!t.empty()) refs.push_back(std::move(t));
    }
    if (refs.empty()) continue;
    acc.add(ctoks, refs);
    if (semantic != nullptr) {
      if (auto s = semantic->find(cand.candidate_id); s != semantic->end()) {
        bert += s->second.bertscore_like;
        mover += s->second.moverscore_like;
        ++semantic_n;
      }
    }
  }
  if (acc.size() == 0) throw RefMetricError("evaluate_model: no candidate has a reference");
  auto row = acc.result();
  if (semantic_n > 0) {
    row.bertscore_like = bert / static_cast<double>(semantic_n);
    row.moverscore_like = mover / static_cast<double>(semantic_n);
  }
  return row;
}

}  // namespace tldr
