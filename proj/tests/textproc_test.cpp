#include "avs/textproc.hpp"

#include "avs/common.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

using namespace avs;

namespace {

std::vector<TokenSeq> corpus_of(std::initializer_list<TokenSeq> seqs) { return seqs; }

}  // namespace

TEST(Tokenize, LowercasesAndSplitsOnPunctuation) {
  EXPECT_EQ(tokenize("A dog, running!"), (TokenSeq{"a", "dog", "running"}));
  EXPECT_TRUE(tokenize("").empty());
  EXPECT_EQ(tokenize("one-man band"), (TokenSeq{"one", "man", "band"}));
}

TEST(Tokenize, KeepsDigitsAndDropsEmptyFragments) {
  EXPECT_EQ(tokenize("  3 cats\t\tand 12dogs.. "), (TokenSeq{"3", "cats", "and", "12dogs"}));
}

TEST(Tokenize, IdempotentOnJoinedOutput) {
  const std::vector<std::string> inputs = {"Hello, World!", "a--b  c", "MiXeD 42 Case?!", ""};
  for (const auto& text : inputs) {
    const auto once = tokenize(text);
    std::string joined;
    for (const auto& t : once) joined += t + " ";
    EXPECT_EQ(tokenize(joined), once) << text;
    for (const auto& t : once) {
      EXPECT_FALSE(t.empty());
      EXPECT_EQ(t.find(' '), std::string::npos);
    }
  }
}

TEST(Stopwords, DefaultListIsLoaded) {
  const auto& s = default_stopwords();
  EXPECT_GT(s.size(), 100u);
  EXPECT_TRUE(s.count("a"));
  EXPECT_TRUE(s.count("the"));
  EXPECT_FALSE(s.count("dog"));
}

TEST(Stopwords, ParseSkipsBlankLines) {
  std::istringstream in("a\n\nthe\r\n  \nof\n");
  const auto s = parse_stopwords(in);
  EXPECT_EQ(s.size(), 3u);
  EXPECT_TRUE(s.count("the"));
}

TEST(Vocabulary, BowDropsStopwords) {
  const auto corpus = corpus_of({{"a", "dog"}, {"a", "cat"}});
  const auto v = Vocabulary::build(corpus, 1, false, StopwordList{"a"});
  EXPECT_EQ(v.size(), 2u);
  EXPECT_EQ(v.index_of("dog"), 0u);
  EXPECT_EQ(v.index_of("cat"), 1u);
  EXPECT_FALSE(v.index_of("a"));
  EXPECT_FALSE(v.includes_stopwords());
  EXPECT_FALSE(v.is_sequential());
  EXPECT_THROW(v.unknown_index(), DataError);
}

TEST(Vocabulary, SequentialKeepsStopwordsAndPrependsUnknown) {
  const auto corpus = corpus_of({{"a", "dog"}, {"a", "cat"}});
  const auto v = Vocabulary::build(corpus, 1, true, StopwordList{"a"});
  ASSERT_EQ(v.size(), 4u);
  EXPECT_EQ(v.word(0), "<unk>");
  EXPECT_EQ(v.word(1), "a");
  EXPECT_EQ(v.word(2), "dog");
  EXPECT_EQ(v.word(3), "cat");
  EXPECT_TRUE(v.includes_stopwords());
  EXPECT_EQ(v.special_tokens(), (std::vector<std::string>{"<unk>"}));
  EXPECT_EQ(v.unknown_index(), 0u);
  EXPECT_EQ(v.map_sequential({"dog", "zebra", "a"}), (std::vector<std::size_t>{2, 0, 1}));
}

TEST(Vocabulary, MinCountThreshold) {
  const auto corpus = corpus_of({{"dog"}, {"dog"}, {"cat"}});
  const auto v = Vocabulary::build(corpus, 2, false, StopwordList{});
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v.word(0), "dog");
  EXPECT_EQ(v.count(0), 2u);
}

TEST(Vocabulary, EmptyResultIsAnError) {
  const auto corpus = corpus_of({{"a"}, {"the"}});
  EXPECT_THROW(Vocabulary::build(corpus, 1, false, StopwordList{"a", "the"}), DataError);
  EXPECT_THROW(Vocabulary::build(corpus, 5, false, StopwordList{}), DataError);
}

TEST(Vocabulary, SaveLoadRoundTrip) {
  const auto corpus = corpus_of({{"a", "dog", "dog"}, {"the", "cat", "dog"}});
  for (bool sequential : {false, true}) {
    const auto v = Vocabulary::build(corpus, 1, sequential);
    std::stringstream buf;
    v.save(buf);
    const auto back = Vocabulary::load(buf);
    ASSERT_EQ(back.size(), v.size());
    EXPECT_EQ(back.is_sequential(), sequential);
    for (std::size_t i = 0; i < v.size(); ++i) {
      EXPECT_EQ(back.word(i), v.word(i));
      EXPECT_EQ(back.count(i), v.count(i));
    }
  }
}

TEST(Vocabulary, FileFormatHeaderAndLines) {
  const auto corpus = corpus_of({{"dog", "cat", "dog"}});
  const auto v = Vocabulary::build(corpus, 1, false, StopwordList{});
  std::stringstream buf;
  v.save(buf);
  EXPECT_EQ(buf.str(), "2\ndog\t0\t2\ncat\t1\t1\n");
}

TEST(Vocabulary, LoadRejectsGapsAndDuplicates) {
  std::istringstream gap("2\ndog\t0\t2\ncat\t2\t1\n");
  EXPECT_THROW(Vocabulary::load(gap), DataError);
  std::istringstream dup("2\ndog\t0\t2\ndog\t1\t1\n");
  EXPECT_THROW(Vocabulary::load(dup), DataError);
  std::istringstream short_file("3\ndog\t0\t2\n");
  EXPECT_THROW(Vocabulary::load(short_file), DataError);
}

TEST(EncodeBow, CountsOccurrences) {
  const auto corpus = corpus_of({{"a", "b", "c"}});
  const auto v = Vocabulary::build(corpus, 1, false, StopwordList{});
  const auto bow = encode_bow({"a", "c", "a"}, v);
  EXPECT_EQ(bow.dim, 3u);
  EXPECT_EQ(bow.dense(), (std::vector<float>{2, 0, 1}));
}

TEST(EncodeBow, EmptyAndOutOfVocabularyGiveZero) {
  const auto corpus = corpus_of({{"a"}});
  const auto v = Vocabulary::build(corpus, 1, false, StopwordList{});
  EXPECT_EQ(encode_bow({}, v).dense(), (std::vector<float>{0}));
  const auto oov = encode_bow({"x", "y"}, v);
  EXPECT_EQ(oov.dense(), (std::vector<float>{0}));
  EXPECT_TRUE(oov.entries.empty());
}

TEST(EncodeBow, RejectsSequentialVocabulary) {
  const auto corpus = corpus_of({{"a"}});
  const auto v = Vocabulary::build(corpus, 1, true, StopwordList{});
  EXPECT_THROW(encode_bow({"a"}, v), DataError);
}

TEST(EncodeBow, PermutationInvariantAndSumsInVocabularyTokens) {
  const auto corpus = corpus_of({{"red", "dog", "runs", "fast", "cat"}});
  const auto v = Vocabulary::build(corpus, 1, false, StopwordList{});
  std::mt19937 gen(7);
  const std::vector<std::string> pool = {"red", "dog", "runs", "fast", "cat", "zebra", "owl"};
  for (int trial = 0; trial < 200; ++trial) {
    TokenSeq s;
    const int len = static_cast<int>(gen() % 12);
    std::size_t in_vocab = 0;
    for (int i = 0; i < len; ++i) {
      s.push_back(pool[gen() % pool.size()]);
      if (v.index_of(s.back())) ++in_vocab;
    }
    const auto base = encode_bow(s, v).dense();
    auto shuffled = s;
    std::shuffle(shuffled.begin(), shuffled.end(), gen);
    EXPECT_EQ(encode_bow(shuffled, v).dense(), base);
    float sum = 0;
    for (float x : base) sum += x;
    EXPECT_EQ(sum, static_cast<float>(in_vocab));
  }
}
