#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "tldr/corpus.hpp"

using namespace tldr;

namespace {

std::string line(const std::string& doi, const std::string& summary, const std::string& source = "human") {
  nlohmann::ordered_json j;
  j["doi"] = doi;
  j["abstract"] = "An abstract about " + doi + ".";
  j["summary"] = summary;
  j["summary_source"] = source;
  j["target_word_count"] = static_cast<int>(word_count(summary));
  j["annotating_doi"] = nullptr;
  return j.dump();
}

Corpus corpus_of(std::size_t n) {
  std::stringstream ss;
  for (std::size_t i = 0; i < n; ++i) ss << line("10.1/" + std::to_string(i), "summary number " + std::to_string(i)) << "\n";
  return read_pairs(ss).corpus;
}

}  // namespace

TEST(LoadPairs, CountPreservation) {
  std::stringstream ss;
  ss << line("10.1/a", "one two three") << "\n" << line("10.1/b", "four five") << "\n" << line("10.1/c", "six") << "\n";
  const auto r = read_pairs(ss);
  EXPECT_EQ(r.corpus.records.size(), 3u);
  EXPECT_TRUE(r.rejects.empty());
}

TEST(LoadPairs, MissingAbstractRejectedWithLineNumber) {
  std::stringstream ss;
  ss << line("10.1/a", "one two") << "\n" << line("10.1/b", "three four") << "\n"
     << R"({"doi":"10.1/c","summary":"x","summary_source":"human","target_word_count":1})" << "\n";
  const auto r = read_pairs(ss);
  EXPECT_EQ(r.corpus.records.size(), 2u);
  ASSERT_EQ(r.rejects.size(), 1u);
  EXPECT_EQ(r.rejects[0].line, 3u);
  EXPECT_NE(r.rejects[0].message.find("abstract"), std::string::npos);
}

TEST(LoadPairs, ValidationRules) {
  const char* bad[] = {
      "not json",
      "[1,2]",
      R"({"doi":"d","abstract":"  ","summary":"s","summary_source":"human","target_word_count":1})",
      R"({"doi":"d","abstract":"a","summary":"s","summary_source":"human","target_word_count":0})",
      R"({"doi":"d","abstract":"a","summary":"s","summary_source":"human","target_word_count":"1"})",
      R"({"doi":"d","abstract":"a","summary":"two words","summary_source":"human","target_word_count":3})",
      R"({"doi":"d","abstract":"a","summary":"s","summary_source":"human","target_word_count":1,"annotating_doi":5})",
  };
  for (const char* b : bad) {
    std::stringstream ss;
    ss << line("10.1/ok", "fine") << "\n" << b << "\n";
    const auto r = read_pairs(ss);
    EXPECT_EQ(r.rejects.size(), 1u) << b;
  }
}

TEST(LoadPairs, UnknownKeysWarnNotReject) {
  std::stringstream ss;
  ss << R"({"doi":"d","abstract":"a","summary":"s","summary_source":"human","target_word_count":1,"extra":true})" << "\n";
  const auto r = read_pairs(ss);
  EXPECT_EQ(r.corpus.records.size(), 1u);
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_EQ(r.warnings[0].line, 1u);
}

TEST(LoadPairs, ModelRowsSkipWordCountCheck) {
  std::stringstream ss;
  ss << R"({"doi":"d","abstract":"a","summary":"three words here","summary_source":"gemma3:27b","target_word_count":56})" << "\n";
  EXPECT_EQ(read_pairs(ss).corpus.records.size(), 1u);
}

TEST(LoadPairs, ZeroValidRecordsIsFatal) {
  std::stringstream ss("garbage\n{}\n");
  EXPECT_THROW(read_pairs(ss), CorpusError);
  EXPECT_THROW(load_pairs("/nonexistent/pairs.jsonl"), CorpusError);
}

TEST(LoadPairs, RoundTripIdentity) {
  std::stringstream ss;
  ss << line("10.1/a", "Ünïcode summary – with dash") << "\n"
     << R"({"doi":"10.2/b","abstract":"x \"quoted\"","summary":"y","summary_source":"qwen3:235b","target_word_count":9,"annotating_doi":"10.9/rev"})"
     << "\n";
  const auto first = read_pairs(ss).corpus;
  std::stringstream out;
  write_pairs(out, first.records);
  const auto second = read_pairs(out).corpus;
  EXPECT_EQ(first.records, second.records);
  std::stringstream again;
  write_pairs(again, second.records);
  EXPECT_EQ(out.str(), again.str());
}

TEST(SplitFewShot, SizesAndPartition) {
  const auto c = corpus_of(40);
  const auto s = split_few_shot(c, 42);
  EXPECT_EQ(s.few_shot.size(), 5u);
  EXPECT_EQ(s.test.size(), 35u);
  std::set<std::size_t> all(s.few_shot.begin(), s.few_shot.end());
  for (auto i : s.test) EXPECT_TRUE(all.insert(i).second);
  EXPECT_EQ(all.size(), 40u);
}

TEST(SplitFewShot, Deterministic) {
  const auto c = corpus_of(100);
  EXPECT_EQ(split_few_shot(c, 7).few_shot, split_few_shot(c, 7).few_shot);
  EXPECT_NE(split_few_shot(c, 7).few_shot, split_few_shot(c, 8).few_shot);
}

TEST(SplitFewShot, PinnedSelection) {
  // Frozen from the documented Fisher-Yates / mt19937_64 procedure so other
  // implementations can check parity.
  const auto c = corpus_of(100);
  EXPECT_EQ(split_few_shot(c, 2025).few_shot, (std::vector<std::size_t>{6, 37, 67, 89, 94}));
}

TEST(SplitFewShot, Boundary) {
  const auto s = split_few_shot(corpus_of(6), 1);
  EXPECT_EQ(s.few_shot.size(), 5u);
  EXPECT_EQ(s.test.size(), 1u);
  EXPECT_THROW(split_few_shot(corpus_of(5), 1), CorpusError);
}

TEST(SplitFewShot, PaperScaleTestSize) {
  const auto s = split_few_shot(corpus_of(35626), 0);
  EXPECT_EQ(s.test.size(), 35621u);
}

TEST(GroupByPaper, Grouping) {
  std::stringstream ss;
  ss << line("a", "first") << "\n" << line("a", "second") << "\n" << line("b", "third") << "\n"
     << line("a", "model text", "gemma3:27b") << "\n";
  const auto groups = group_by_paper(read_pairs(ss).corpus);
  ASSERT_EQ(groups.size(), 2u);
  EXPECT_EQ(groups[0].doi, "a");
  EXPECT_EQ(groups[0].summaries.size(), 2u);
  EXPECT_TRUE(groups[0].baseline_eligible());
  EXPECT_FALSE(groups[1].baseline_eligible());
  EXPECT_EQ(annotation_count_histogram(groups), (std::vector<std::size_t>{1, 1}));
}

TEST(GroupByPaper, NoDuplicatesNoEligibleGroups) {
  for (const auto& g : group_by_paper(corpus_of(10))) EXPECT_FALSE(g.baseline_eligible());
}

TEST(GroupByPaper, PartitionProperty) {
  std::stringstream ss;
  std::mt19937 rng(3);
  std::size_t humans = 0;
  for (int i = 0; i < 300; ++i) {
    const bool human = rng() % 4 != 0;
    humans += human;
    ss << line("d" + std::to_string(rng() % 50), "text " + std::to_string(i), human ? "human" : "llama4:16x17b") << "\n";
  }
  std::size_t total = 0;
  for (const auto& g : group_by_paper(read_pairs(ss).corpus)) {
    total += g.summaries.size();
    for (const auto& r : g.summaries) {
      EXPECT_EQ(r.doi, g.doi);
      EXPECT_TRUE(r.is_human());
    }
  }
  EXPECT_EQ(total, humans);
}
