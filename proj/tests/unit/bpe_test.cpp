#include <gtest/gtest.h>

#include <sstream>
#include <unordered_map>

#include "mas/error.hpp"
#include "mas/harness/synth.hpp"
#include "mas/rng.hpp"
#include "mas/text/bpe.hpp"

namespace {

using namespace mas::text;

// Naive reference: no deduplication, pair keys packed into one integer,
// merges applied by rescanning from the left.
std::vector<std::pair<int, int>> naive_train(const std::vector<std::string>& corpus, std::size_t target) {
  std::vector<std::vector<int>> seqs;
  for (const auto& s : corpus) seqs.emplace_back(s.begin(), s.end());
  for (auto& s : seqs) {
    for (auto& t : s) t &= 0xff;
  }
  std::vector<std::pair<int, int>> merges;
  while (260 + merges.size() < target) {
    std::unordered_map<long, long> counts;
    for (const auto& s : seqs) {
      for (std::size_t j = 1; j < s.size(); ++j) ++counts[static_cast<long>(s[j - 1]) * 100000 + s[j]];
    }
    long best = -1, best_count = 1;
    for (const auto& [k, c] : counts) {
      if (c > best_count || (c == best_count && best >= 0 && k < best)) {
        best = k;
        best_count = c;
      }
    }
    if (best < 0) break;
    const std::pair<int, int> pair{static_cast<int>(best / 100000), static_cast<int>(best % 100000)};
    const int id = 260 + static_cast<int>(merges.size());
    merges.push_back(pair);
    for (auto& s : seqs) {
      std::vector<int> out;
      for (std::size_t j = 0; j < s.size(); ++j) {
        if (j + 1 < s.size() && s[j] == pair.first && s[j + 1] == pair.second) {
          out.push_back(id);
          ++j;
        } else {
          out.push_back(s[j]);
        }
      }
      s = out;
    }
  }
  return merges;
}

std::vector<std::string> random_corpus(mas::CounterRng& rng, std::size_t n, const std::string& alphabet) {
  std::vector<std::string> out(n);
  for (auto& s : out) {
    const auto len = rng.below(12);
    for (std::size_t i = 0; i < len; ++i) s.push_back(alphabet[rng.below(alphabet.size())]);
  }
  return out;
}

TEST(BpeTrain, RepeatedLetterMergesOnce) {
  const std::vector<std::string> corpus{"aaaa"};
  const auto v = bpe_train(corpus, 270);
  ASSERT_EQ(v.merges().size(), 1u);
  EXPECT_EQ(v.merges()[0], (std::pair<int, int>{'a', 'a'}));
  EXPECT_EQ(bpe_tokenize("aaaa", v), (std::vector<int>{260, 260}));
  EXPECT_EQ(bpe_tokenize("aaa", v), (std::vector<int>{260, 'a'}));
}

TEST(BpeTrain, TargetAtAlphabetSizeLearnsNothing) {
  const std::vector<std::string> corpus{"abab", "abab"};
  EXPECT_TRUE(bpe_train(corpus, BpeVocab::kAlphabetSize).merges().empty());
  EXPECT_THROW(bpe_train(corpus, 100), mas::RangeError);
  EXPECT_THROW(bpe_train({}, 300), mas::RangeError);
}

TEST(BpeTrain, TiesGoToSmallestPair) {
  // "ab" and "cd" each occur twice; (a,b) is the smaller pair.
  const std::vector<std::string> corpus{"ab", "ab", "cd", "cd"};
  const auto v = bpe_train(corpus, 261);
  EXPECT_EQ(v.merges()[0], (std::pair<int, int>{'a', 'b'}));
}

TEST(BpeTrain, MatchesNaiveReference) {
  mas::CounterRng rng(50);
  for (int trial = 0; trial < 60; ++trial) {
    const auto corpus = random_corpus(rng, 5 + rng.below(30), trial % 2 ? "ab" : "abcde ");
    const std::size_t target = 260 + rng.below(25);
    ASSERT_EQ(bpe_train(corpus, target).merges(), naive_train(corpus, target)) << "trial " << trial;
  }
}

TEST(BpeTrain, DeterministicOnCaptions) {
  const auto samples = mas::harness::synth_generate({}, 200, 3);
  std::vector<std::string> captions;
  for (const auto& s : samples) captions.push_back(s.caption);
  const auto a = bpe_train(captions, 320);
  EXPECT_EQ(a, bpe_train(captions, 320));
  EXPECT_LE(a.size(), 320u);
}

TEST(BpeEncode, RoundTripsArbitraryBytes) {
  mas::CounterRng rng(51);
  const auto corpus = random_corpus(rng, 50, "xyz w");
  const auto v = bpe_train(corpus, 290);
  for (int i = 0; i < 200; ++i) {
    std::string s;
    const auto len = rng.below(20);
    for (std::size_t j = 0; j < len; ++j) s.push_back(static_cast<char>(rng.below(256)));
    const auto toks = bpe_tokenize(s, v);
    EXPECT_EQ(bpe_decode(toks, v), s);
    for (int t : toks) EXPECT_FALSE(BpeVocab::is_special(t));
  }
}

TEST(BpeEncode, PaddingAndTruncation) {
  const std::vector<std::string> corpus{"red circle", "red square"};
  const auto v = bpe_train(corpus, 300);
  const auto toks = bpe_tokenize("red circle", v);
  const auto padded = bpe_encode("red circle", v, toks.size() + 5);
  ASSERT_EQ(padded.size(), toks.size() + 5);
  for (std::size_t i = 0; i < toks.size(); ++i) EXPECT_EQ(padded[i], toks[i]);
  for (std::size_t i = toks.size(); i < padded.size(); ++i) EXPECT_EQ(padded[i], BpeVocab::kPad);
  EXPECT_EQ(bpe_decode(padded, v), "red circle");
  EXPECT_EQ(bpe_encode("red circle", v, 1), std::vector<int>{toks[0]});
  EXPECT_EQ(bpe_encode("", v, 4), std::vector<int>(4, BpeVocab::kPad));
}

TEST(BpeDecode, UnknownTokenIsAnError) {
  const BpeVocab v;
  EXPECT_THROW(bpe_decode(std::vector<int>{260}, v), mas::RangeError);
  EXPECT_THROW(bpe_decode(std::vector<int>{-1}, v), mas::RangeError);
  EXPECT_EQ(bpe_decode(std::vector<int>{BpeVocab::kBosText, 'h', 'i'}, v), "hi");
}

TEST(BpeVocabIo, RoundTripAndMalformedInput) {
  const std::vector<std::string> corpus{"abcabcabc", "bcbcbc"};
  const auto v = bpe_train(corpus, 280);
  std::stringstream ss;
  write_vocab(ss, v);
  EXPECT_EQ(read_vocab(ss), v);

  std::istringstream no_header("97 98\n");
  EXPECT_THROW(read_vocab(no_header), mas::FormatError);
  std::istringstream bad("mas-bpe 1\n97 x\n");
  EXPECT_THROW(read_vocab(bad), mas::FormatError);
  std::istringstream forward("mas-bpe 1\n97 261\n");
  EXPECT_THROW(read_vocab(forward), mas::FormatError);
  std::istringstream special("mas-bpe 1\n256 97\n");
  EXPECT_THROW(read_vocab(special), mas::FormatError);
}

}  // namespace
