#include <gtest/gtest.h>

#include "property.hpp"
#include "tldr/tokenize.hpp"

using namespace tldr;

namespace {

std::vector<std::string> sentence_texts(std::string_view text) {
  std::vector<std::string> out;
  for (const auto& s : split_sentences(text)) out.emplace_back(s.in(text));
  return out;
}

std::string normalize_ws(std::string_view s) {
  std::string out;
  bool space = false;
  for (char c : s) {
    if (c == ' ' || c == '\n' || c == '\t') {
      space = !out.empty();
    } else {
      if (space) out += ' ';
      space = false;
      out += c;
    }
  }
  return out;
}

}  // namespace

TEST(SplitWords, BaseCase) {
  EXPECT_EQ(split_words("The cat sat."), (std::vector<std::string>{"The", "cat", "sat"}));
}

TEST(SplitWords, HyphenatedCompoundIsOneToken) {
  EXPECT_EQ(split_words("state-of-the-art"), (std::vector<std::string>{"state-of-the-art"}));
}

TEST(SplitWords, GoldenMixedScriptFixture) {
  // Hand trace: "IFN-γ-inducible" joins across both hyphens (γ is a word
  // character); "(p21)" loses its brackets.
  EXPECT_EQ(split_words("IFN-γ-inducible CIITA (p21)"),
            (std::vector<std::string>{"IFN-γ-inducible", "CIITA", "p21"}));
}

TEST(SplitWords, EdgeCases) {
  EXPECT_TRUE(split_words("").empty());
  EXPECT_TRUE(split_words(" -- ... ; ").empty());
  EXPECT_EQ(split_words("3.5 mg and 4,779 genes"), (std::vector<std::string>{"3.5", "mg", "and", "4,779", "genes"}));
  EXPECT_EQ(split_words("cells' fate - not"), (std::vector<std::string>{"cells", "fate", "not"}));
  EXPECT_EQ(split_words("post‑mitotic neurons"), (std::vector<std::string>{"post‑mitotic", "neurons"}));
  EXPECT_EQ(split_words("CD30–CD30L"), (std::vector<std::string>{"CD30", "CD30L"}));  // en dash separates
}

TEST(SplitWords, JoinIsIdempotent) {
  tldr::testing::Gen gen(7);
  for (int i = 0; i < 200; ++i) {
    auto toks = split_words(gen.sentence(0, 15) + " " + gen.sentence(1, 5));
    EXPECT_EQ(split_words(tldr::testing::join(toks)), toks);
  }
}

TEST(SplitSentences, TerminalPunctuation) {
  EXPECT_EQ(sentence_texts("A. B? C!"), (std::vector<std::string>{"A. ", "B? ", "C!"}));
}

TEST(SplitSentences, AbbreviationGuard) {
  EXPECT_EQ(split_sentences("e.g. mice died.").size(), 1u);
  EXPECT_EQ(split_sentences("As shown by Smith et al. Cells died.").size(), 1u);
  EXPECT_EQ(split_sentences("See Fig. 2 for details. Next one.").size(), 2u);
}

TEST(SplitSentences, LowercaseContinuation) {
  EXPECT_EQ(split_sentences("Genome of B. thetaiotaomicron was sequenced.").size(), 1u);
}

TEST(SplitSentences, NoWordsNoSentences) {
  EXPECT_TRUE(split_sentences("").empty());
  EXPECT_TRUE(split_sentences("  ... !").empty());
}

TEST(SplitSentences, UnterminatedTextIsOneSentence) {
  EXPECT_EQ(split_sentences("no final stop here").size(), 1u);
}

TEST(SplitSentences, SpansPartitionTheText) {
  tldr::testing::Gen gen(11);
  for (int i = 0; i < 200; ++i) {
    std::string text = "  ";
    const int n = gen.uniform(1, 6);
    for (int k = 0; k < n; ++k) text += gen.sentence(1, 8) + (k % 2 ? "  " : " ");
    if (gen.uniform(0, 1)) text += "...";
    const auto spans = split_sentences(text);
    ASSERT_FALSE(spans.empty());
    EXPECT_EQ(spans.front().begin, 0u);
    EXPECT_EQ(spans.back().end, text.size());
    std::string joined;
    for (std::size_t s = 0; s < spans.size(); ++s) {
      if (s) {
        EXPECT_EQ(spans[s].begin, spans[s - 1].end);
      }
      joined += spans[s].in(text);
    }
    EXPECT_EQ(normalize_ws(joined), normalize_ws(text));
  }
}

TEST(CountSyllables, Examples) {
  EXPECT_EQ(count_syllables("cat"), 1);
  EXPECT_EQ(count_syllables("readability"), 5);  // read-a-bil-i-ty
  EXPECT_EQ(count_syllables("make"), 1);         // a | silent e
  EXPECT_EQ(count_syllables("table"), 2);        // consonant + le keeps its e
  EXPECT_EQ(count_syllables("the"), 1);          // floor
  EXPECT_EQ(count_syllables("CD30"), 1);         // no vowels, floor
  EXPECT_EQ(count_syllables("Protein"), 2);
  EXPECT_THROW(count_syllables(""), std::invalid_argument);
}

TEST(Ngrams, Examples) {
  const std::vector<std::string> abc{"a", "b", "c"};
  EXPECT_EQ(ngrams(abc, 2), (std::vector<Ngram>{{"a", "b"}, {"b", "c"}}));
  EXPECT_TRUE(ngrams(std::vector<std::string>{"a", "b"}, 3).empty());
  EXPECT_EQ(ngrams(std::vector<std::string>(25, "x"), 3).size(), 23u);
  EXPECT_THROW(ngrams(abc, 0), std::invalid_argument);
  EXPECT_EQ(ngram_keys(std::vector<std::string>{"The", "CAT"}, 2), (std::vector<std::string>{"the cat"}));
}

TEST(Ngrams, LengthFormulaProperty) {
  tldr::testing::Gen gen(3);
  for (int i = 0; i < 500; ++i) {
    const auto toks = gen.tokens(0, 30);
    const int n = gen.uniform(1, 6);
    const auto expected = toks.size() >= static_cast<std::size_t>(n) ? toks.size() - n + 1 : 0;
    EXPECT_EQ(ngrams(toks, n).size(), expected);
    EXPECT_EQ(ngram_keys(toks, n).size(), expected);
  }
}

TEST(Tokenize, SentenceWordCountsSumToWordCount) {
  tldr::testing::Gen gen(5);
  for (int i = 0; i < 200; ++i) {
    std::string text;
    const int n = gen.uniform(1, 5);
    for (int k = 0; k < n; ++k) text += gen.sentence(1, 9) + " ";
    const auto tok = tokenize(text);
    std::size_t total = 0;
    for (auto c : tok.sentence_word_counts) total += c;
    EXPECT_EQ(total, tok.words.size());
    EXPECT_EQ(tok.syllables.size(), tok.words.size());
    for (int s : tok.syllables) EXPECT_GE(s, 1);
  }
}

TEST(Tokenize, CharCountIsLettersAndDigits) {
  EXPECT_EQ(tokenize("The cat-like p21, sat.").char_count, 3u + 7u + 3u + 3u);
}

TEST(Tokenize, Deterministic) {
  const std::string text = "Numerous loci were mapped. e.g. QTL on BTA14!";
  const auto a = tokenize(text), b = tokenize(text);
  EXPECT_EQ(a.words, b.words);
  EXPECT_EQ(a.sentences, b.sentences);
}
