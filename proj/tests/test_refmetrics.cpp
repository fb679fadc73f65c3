#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <map>

#include "property.hpp"
#include "tldr/refmetrics.hpp"

using namespace tldr;
using tldr::testing::Gen;
using tldr::testing::join;

namespace {

using Tokens = std::vector<std::string>;

// Oracles below use ordered vectors and nested loops only; no hashing, no
// shared helpers with the implementation.
std::vector<Tokens> grams(const Tokens& t, int n) {
  std::vector<Tokens> out;
  for (int i = 0; i + n <= static_cast<int>(t.size()); ++i) out.emplace_back(t.begin() + i, t.begin() + i + n);
  return out;
}

std::size_t count_of(const std::vector<Tokens>& v, const Tokens& g) {
  std::size_t c = 0;
  for (const auto& x : v) c += x == g;
  return c;
}

double clipped_overlap(const Tokens& cand, const std::vector<Tokens>& refs, int n) {
  const auto cg = grams(cand, n);
  std::vector<Tokens> seen;
  double total = 0;
  for (const auto& g : cg) {
    if (count_of(seen, g)) continue;
    seen.push_back(g);
    std::size_t best = 0;
    for (const auto& r : refs) best = std::max(best, count_of(grams(r, n), g));
    total += static_cast<double>(std::min(count_of(cg, g), best));
  }
  return total;
}

double oracle_bleu(const Tokens& cand, const std::vector<Tokens>& refs) {
  double log_sum = 0;
  for (int n = 1; n <= 4; ++n) {
    const double total = static_cast<double>(grams(cand, n).size());
    const double m = clipped_overlap(cand, refs, n);
    log_sum += 0.25 * std::log(m > 0 ? m / total : 0.01 / std::max(total, 1.0));
  }
  double r = 0;
  long best = -1;
  for (const auto& ref : refs) {
    const long d = std::labs(static_cast<long>(ref.size()) - static_cast<long>(cand.size()));
    if (best < 0 || d < best || (d == best && static_cast<double>(ref.size()) < r)) {
      best = d;
      r = static_cast<double>(ref.size());
    }
  }
  const double c = static_cast<double>(cand.size());
  return (c > r ? 1.0 : std::exp(1 - r / c)) * std::exp(log_sum);
}

// LCS by enumerating every subsequence of the shorter side.
std::size_t oracle_lcs(const Tokens& a, const Tokens& b) {
  const Tokens& s = a.size() <= b.size() ? a : b;
  const Tokens& l = a.size() <= b.size() ? b : a;
  std::size_t best = 0;
  for (unsigned mask = 0; mask < (1u << s.size()); ++mask) {
    Tokens sub;
    for (std::size_t i = 0; i < s.size(); ++i)
      if ((mask >> i) & 1u) sub.push_back(s[i]);
    std::size_t k = 0;
    for (std::size_t i = 0; i < l.size() && k < sub.size(); ++i) k += l[i] == sub[k];
    if (k == sub.size()) best = std::max(best, sub.size());
  }
  return best;
}

double oracle_f1(double overlap, double c, double r) {
  if (overlap == 0 || c == 0 || r == 0) return 0;
  const double p = overlap / c, q = overlap / r;
  return 2 * p * q / (p + q);
}

Tokens lower(Tokens t) {
  for (auto& w : t) w = fold_case(w);
  return t;
}

}  // namespace

TEST(PorterStem, ClassicVocabulary) {
  const std::map<std::string, std::string> cases = {
      {"caresses", "caress"}, {"ponies", "poni"},       {"cats", "cat"},          {"feed", "feed"},
      {"agreed", "agre"},     {"plastered", "plaster"}, {"motoring", "motor"},    {"sing", "sing"},
      {"hopping", "hop"},     {"falling", "fall"},      {"hissing", "hiss"},      {"filing", "file"},
      {"happy", "happi"},     {"sky", "sky"},           {"relational", "relat"},  {"conditional", "condit"},
      {"hopeful", "hope"},    {"goodness", "good"},     {"adjustment", "adjust"}, {"replacement", "replac"},
      {"effective", "effect"}, {"probate", "probat"},   {"rate", "rate"},         {"cease", "ceas"},
      {"controll", "control"}, {"roll", "roll"},        {"electrical", "electr"}, {"generalization", "gener"},
      {"sits", "sit"},        {"ion", "ion"},           {"is", "is"}};
  for (const auto& [in, out] : cases) EXPECT_EQ(porter_stem(in), out) << in;
}

TEST(PorterStem, NonLetterWordsUnchanged) {
  EXPECT_EQ(porter_stem("p53"), "p53");
  EXPECT_EQ(porter_stem("cells-"), "cells-");
  EXPECT_EQ(porter_stem("Cats"), "Cats");
  EXPECT_EQ(porter_stem(""), "");
}

TEST(Bleu, IdenticalTextsScoreOne) {
  EXPECT_DOUBLE_EQ(bleu("the cat sat on the mat", std::vector<std::string>{"The cat sat on the mat"}), 1.0);
}

TEST(Bleu, HandComputedShortCandidate) {
  // p1 = p2 = p3 = 1, p4 smoothed to 0.01 / 1, BP = exp(1 - 4/3).
  const double expected = std::pow(0.01, 0.25) * std::exp(1.0 - 4.0 / 3.0);
  EXPECT_NEAR(bleu("the cat sat", std::vector<std::string>{"the cat sat down"}), expected, 1e-12);
}

TEST(Bleu, DisjointTextsNearZero) {
  // Every order falls to the smoothed floor 0.01 / total.
  const double b = bleu("alpha beta gamma delta", std::vector<std::string>{"one two three four"});
  EXPECT_NEAR(b, 0.01 * std::pow(1.0 / (4 * 3 * 2 * 1), 0.25), 1e-15);
  EXPECT_LT(b, 0.01);
}

TEST(Bleu, ClosestReferenceLengthTiesToShorter) {
  // Candidate of 4 words; references of 3 and 5 words are equally close.
  const Tokens cand = {"a", "b", "c", "d"};
  const std::vector<Tokens> refs = {{"a", "b", "c", "d", "e"}, {"a", "b", "c"}};
  EXPECT_DOUBLE_EQ(bleu_stats(cand, refs).reference_length, 3.0);
}

TEST(Bleu, MatchesOracleOnRandomTexts) {
  Gen g(3);
  for (int trial = 0; trial < 300; ++trial) {
    const auto cand = lower(g.tokens(1, 12));
    std::vector<Tokens> refs;
    std::vector<std::string> ref_texts;
    for (int r = 0, k = g.uniform(1, 3); r < k; ++r) {
      refs.push_back(lower(g.tokens(1, 12)));
      ref_texts.push_back(join(refs.back()));
    }
    const double got = bleu(join(cand), ref_texts);
    EXPECT_NEAR(got, oracle_bleu(cand, refs), 1e-12);
    EXPECT_GE(got, 0.0);
    EXPECT_LE(got, 1.0);
  }
}

TEST(Bleu, CorpusModeSumsStatistics) {
  const std::vector<Tokens> c = {{"a", "b", "c", "d", "e"}, {"x", "y", "z"}};
  const std::vector<Tokens> r = {{"a", "b", "c", "d", "f"}, {"x", "y", "w", "v"}};
  BleuStats sum;
  for (std::size_t i = 0; i < c.size(); ++i) sum += bleu_stats(c[i], std::span(&r[i], 1));
  // 1-grams: 4/5 + 2/3, 2-grams: 3/4 + 1/2, 3-grams: 2/3 + 0/1, 4-grams: 1/2 + 0/0.
  const double expected = std::exp(1.0 - 9.0 / 8.0) *
                          std::exp(0.25 * (std::log(6.0 / 8.0) + std::log(4.0 / 6.0) + std::log(2.0 / 4.0) +
                                           std::log(1.0 / 2.0)));
  EXPECT_NEAR(bleu_from_stats(sum), expected, 1e-12);
}

TEST(Bleu, RejectsEmptyInputs) {
  EXPECT_THROW(bleu("", std::vector<std::string>{"a b"}), RefMetricError);
  EXPECT_THROW(bleu("a b", std::vector<std::string>{}), RefMetricError);
  EXPECT_THROW(bleu("a b", std::vector<std::string>{"..."}), RefMetricError);
}

TEST(Rouge, WorkedExample) {
  const auto s = rouge_f1("a b c", "a c");
  EXPECT_DOUBLE_EQ(s.rouge1, 0.8);
  EXPECT_DOUBLE_EQ(s.rougeL, 0.8);
  EXPECT_DOUBLE_EQ(s.rouge2, 0.0);
}

TEST(Rouge, IdenticalIsOneAndCaseFolded) {
  const auto s = rouge_f1("Gene expression in mice", "gene EXPRESSION in mice");
  EXPECT_DOUBLE_EQ(s.rouge1, 1.0);
  EXPECT_DOUBLE_EQ(s.rouge2, 1.0);
  EXPECT_DOUBLE_EQ(s.rougeL, 1.0);
}

TEST(Rouge, SingleWordHasNoBigrams) {
  EXPECT_DOUBLE_EQ(rouge_f1("gene", "gene").rouge2, 0.0);
  EXPECT_DOUBLE_EQ(rouge_f1("gene", "gene").rouge1, 1.0);
}

TEST(Rouge, SymmetricAndMatchesOracle) {
  Gen g(5);
  for (int trial = 0; trial < 300; ++trial) {
    const auto a = lower(g.tokens(1, 10)), b = lower(g.tokens(1, 10));
    const auto ab = rouge_f1(join(a), join(b)), ba = rouge_f1(join(b), join(a));
    EXPECT_DOUBLE_EQ(ab.rouge1, ba.rouge1);
    EXPECT_DOUBLE_EQ(ab.rouge2, ba.rouge2);
    EXPECT_DOUBLE_EQ(ab.rougeL, ba.rougeL);
    const std::vector<Tokens> rb = {b};
    EXPECT_NEAR(ab.rouge1, oracle_f1(clipped_overlap(a, rb, 1), a.size(), b.size()), 1e-12);
    EXPECT_NEAR(ab.rouge2, oracle_f1(clipped_overlap(a, rb, 2), grams(a, 2).size(), grams(b, 2).size()), 1e-12);
    EXPECT_NEAR(ab.rougeL, oracle_f1(static_cast<double>(oracle_lcs(a, b)), a.size(), b.size()), 1e-12);
    for (double v : {ab.rouge1, ab.rouge2, ab.rougeL}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Meteor, IdenticalClosedForm) {
  for (int m = 1; m <= 8; ++m) {
    Tokens t;
    for (int i = 0; i < m; ++i) t.push_back("w" + std::to_string(i));
    EXPECT_NEAR(meteor(join(t), join(t)), 1.0 - 0.5 / (m * m * m), 1e-12) << m;
  }
}

TEST(Meteor, StemStageMatchesInflections) {
  // Both words align only through stems: one chunk, P = R = 1.
  EXPECT_NEAR(meteor("cats sit", "cat sits"), 1.0 - 0.5 / 8.0, 1e-12);
}

TEST(Meteor, SwappedOrderCountsTwoChunks) {
  // m = 2, chunks = 2, Fmean = 1, penalty = 0.5.
  EXPECT_NEAR(meteor("b a", "a b"), 0.5, 1e-12);
}

TEST(Meteor, PartialOverlap) {
  // cand "a b x" ref "a b c d": m = 2, P = 2/3, R = 1/2, one chunk.
  const double p = 2.0 / 3.0, r = 0.5;
  const double fmean = p * r / (0.9 * p + 0.1 * r);
  EXPECT_NEAR(meteor("a b x", "a b c d"), fmean * (1 - 0.5 * std::pow(0.5, 3)), 1e-12);
}

TEST(Meteor, NoMatchIsZero) { EXPECT_DOUBLE_EQ(meteor("alpha", "beta"), 0.0); }

TEST(Meteor, AlignmentPrefersContinuingChunk) {
  // "the" appears twice in the reference; the second one continues "of".
  const auto a = meteor_align(Tokens{"of", "the"}, Tokens{"the", "role", "of", "the"});
  EXPECT_EQ(a.ref_of, (std::vector<int>{2, 3}));
  EXPECT_EQ(a.chunks, 1u);
}

TEST(Meteor, BoundedOnRandomTexts) {
  Gen g(9);
  for (int trial = 0; trial < 300; ++trial) {
    const double v = meteor(join(g.tokens(1, 10)), join(g.tokens(1, 10)));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

namespace {

PaperGroup make_group(const std::string& doi, std::vector<std::string> summaries) {
  PaperGroup g{doi, {}};
  for (auto& s : summaries) {
    PairRecord r;
    r.doi = doi;
    r.abstract = "abstract";
    r.summary = std::move(s);
    r.summary_source = "human";
    r.target_word_count = static_cast<int>(word_count(r.summary));
    g.summaries.push_back(std::move(r));
  }
  return g;
}

struct Scores {
  double bleu, r1, r2, rl, meteor;
};

Scores pair_scores(const std::string& c, const std::string& r) {
  const auto rs = rouge_f1(c, r);
  return {bleu(c, std::vector<std::string>{r}), rs.rouge1, rs.rouge2, rs.rougeL, meteor(c, r)};
}

}  // namespace

TEST(HumanBaseline, ReplaysDrawsExactly) {
  const std::vector<PaperGroup> groups = {
      make_group("10.1/b", {"gene regulation in mice", "mice gene regulation study", "a study of regulation"}),
      make_group("10.1/a", {"tumor cells grow fast", "cells of the tumor grow"}),
      make_group("10.1/c", {"single summary only"})};
  const BaselineConfig cfg{7, 42};
  const auto row = human_cross_baseline(groups, cfg);

  Scores sum{0, 0, 0, 0, 0};
  std::size_t n = 0;
  for (const auto& g : groups) {
    if (g.summaries.size() < 2) continue;
    Rng rng(mix_seed(cfg.seed, fnv1a64(g.doi)));
    for (int it = 0; it < cfg.iterations; ++it) {
      const auto ref = uniform_index(rng, g.summaries.size());
      for (std::size_t c = 0; c < g.summaries.size(); ++c) {
        if (c == ref) continue;
        const auto s = pair_scores(g.summaries[c].summary, g.summaries[ref].summary);
        sum.bleu += s.bleu;
        sum.r1 += s.r1;
        sum.r2 += s.r2;
        sum.rl += s.rl;
        sum.meteor += s.meteor;
        ++n;
      }
    }
  }
  EXPECT_EQ(row.pairs, n);
  EXPECT_NEAR(row.bleu, sum.bleu / n, 1e-12);
  EXPECT_NEAR(row.rouge1, sum.r1 / n, 1e-12);
  EXPECT_NEAR(row.rouge2, sum.r2 / n, 1e-12);
  EXPECT_NEAR(row.rougeL, sum.rl / n, 1e-12);
  EXPECT_NEAR(row.meteor, sum.meteor / n, 1e-12);
  EXPECT_FALSE(row.bertscore_like);
}

TEST(HumanBaseline, ConvergesToAllOrderedPairs) {
  const std::vector<PaperGroup> groups = {
      make_group("10.1/x", {"gene regulation in mice", "mice gene regulation study", "a study of regulation"})};
  double expected = 0;
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c)
      if (c != r) expected += rouge_f1(groups[0].summaries[c].summary, groups[0].summaries[r].summary).rouge1;
  expected /= 6.0;
  const auto row = human_cross_baseline(groups, {20000, 1});
  EXPECT_NEAR(row.rouge1, expected, 0.01);
}

TEST(HumanBaseline, OrderInvariantAndDeterministic) {
  std::vector<PaperGroup> groups = {make_group("10.1/a", {"x y z", "y z w", "x w"}),
                                    make_group("10.1/b", {"gene a b", "gene b c"})};
  const auto first = human_cross_baseline(groups, {10, 5});
  std::reverse(groups.begin(), groups.end());
  const auto second = human_cross_baseline(groups, {10, 5});
  EXPECT_DOUBLE_EQ(first.bleu, second.bleu);
  EXPECT_DOUBLE_EQ(first.rouge1, second.rouge1);
  EXPECT_DOUBLE_EQ(first.meteor, second.meteor);
}

TEST(HumanBaseline, RejectsWhenNothingEligible) {
  const std::vector<PaperGroup> groups = {make_group("10.1/a", {"only one"})};
  EXPECT_THROW(human_cross_baseline(groups, {10, 0}), RefMetricError);
  const std::vector<PaperGroup> two = {make_group("10.1/a", {"a b", "a c"})};
  EXPECT_THROW(human_cross_baseline(two, {0, 0}), RefMetricError);
}

TEST(EvaluateModel, MaxOverReferencesAndSemanticMerge) {
  const std::vector<Candidate> cands = {{"10.1/a", "tumor cells grow", "m:10.1/a:0"},
                                        {"10.1/b", "gene study", "m:10.1/b:0"},
                                        {"10.1/missing", "ignored", "m:10.1/missing:0"}};
  const std::unordered_map<std::string, std::vector<std::string>> refs = {
      {"10.1/a", {"unrelated words here", "tumor cells grow"}}, {"10.1/b", {"gene study"}}};
  const std::unordered_map<std::string, SemanticScore> sem = {{"m:10.1/a:0", {"10.1/a", "m:10.1/a:0", 0.8, 0.6}}};
  const auto row = evaluate_model(cands, refs, &sem);
  EXPECT_EQ(row.pairs, 2u);
  EXPECT_DOUBLE_EQ(row.rouge1, 1.0);
  EXPECT_DOUBLE_EQ(row.rougeL, 1.0);
  ASSERT_TRUE(row.bertscore_like);
  EXPECT_DOUBLE_EQ(*row.bertscore_like, 0.8);
  EXPECT_DOUBLE_EQ(*row.moverscore_like, 0.6);
  const auto plain = evaluate_model(cands, refs);
  EXPECT_FALSE(plain.bertscore_like);
}

TEST(EvaluateModel, CorpusBleuMode) {
  const std::vector<Candidate> cands = {{"k", "a b c d e", "1"}, {"j", "x y z", "2"}};
  const std::unordered_map<std::string, std::vector<std::string>> refs = {{"k", {"a b c d f"}},
                                                                          {"j", {"x y w v"}}};
  RefMetricOptions opts;
  opts.bleu_mode = BleuMode::Corpus;
  const auto row = evaluate_model(cands, refs, nullptr, opts);
  const double expected = std::exp(1.0 - 9.0 / 8.0) *
                          std::exp(0.25 * (std::log(6.0 / 8.0) + std::log(4.0 / 6.0) + std::log(2.0 / 4.0) +
                                           std::log(1.0 / 2.0)));
  EXPECT_NEAR(row.bleu, expected, 1e-12);
}

TEST(EvaluateModel, NoOverlapThrows) {
  const std::vector<Candidate> cands = {{"k", "a", "1"}};
  EXPECT_THROW(evaluate_model(cands, {}), RefMetricError);
}

TEST(SemanticScores, LoadsJsonl) {
  const std::string path = ::testing::TempDir() + "/sem.jsonl";
  {
    std::ofstream out(path);
    out << R"({"doi":"10.1/a","candidate_id":"c1","bertscore_like":0.5,"moverscore_like":0.25})" << "\n\n";
  }
  const auto m = load_semantic_scores(path);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_DOUBLE_EQ(m.at("c1").moverscore_like, 0.25);
  {
    std::ofstream out(path);
    out << R"({"doi":"10.1/a","candidate_id":"c1"})" << "\n";
  }
  EXPECT_THROW(load_semantic_scores(path), RefMetricError);
}
