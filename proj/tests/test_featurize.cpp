#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "dami/error.hpp"
#include "dami/featurize.hpp"
#include "dami/synthetic.hpp"

using namespace dami;

namespace {

Corpus aab_corpus() {
  Corpus c;
  c.dialogues.push_back({"a", {{Role::kCustomer, "a a b", Label::kNormal}}});
  c = build_vocabulary(c, 1);
  c.pos_tagset = synthetic_tagset();
  return c;
}

class FixedTagger final : public Tagger {
 public:
  explicit FixedTagger(std::vector<std::string> tags) : tags_(std::move(tags)) {}
  std::vector<std::string> tag(const std::vector<std::string>&) const override { return tags_; }

 private:
  std::vector<std::string> tags_;
};

}  // namespace

TEST(PositionalEncoding, FirstPosition) {
  const auto pe = positional_encoding(1, 4);
  EXPECT_EQ(pe, Eigen::Vector4d(0, 1, 0, 1));
}

TEST(PositionalEncoding, RangeAndErrors) {
  for (int p = 1; p <= 300; p += 7) {
    const auto pe = positional_encoding(p, 20);
    EXPECT_LE(pe.maxCoeff(), 1.0);
    EXPECT_GE(pe.minCoeff(), -1.0);
  }
  EXPECT_THROW(positional_encoding(1, 5), Error);
  EXPECT_THROW(positional_encoding(0, 4), Error);
}

TEST(PositionalEncoding, ClosedForm) {
  const int d = 10;
  const auto pe = positional_encoding(4, d);
  for (int i = 0; i < d / 2; ++i) {
    const double w = std::exp(-std::log(10000.0) * (2.0 * i) / d);
    EXPECT_NEAR(pe(2 * i), std::sin(3.0 * w), 1e-12);
    EXPECT_NEAR(pe(2 * i + 1), std::cos(3.0 * w), 1e-12);
  }
}

TEST(PositionalEncoding, DistinctUpTo512AtDim200) {
  std::vector<Eigen::VectorXd> all;
  for (int p = 1; p <= 512; ++p) all.push_back(positional_encoding(p, 200));
  double closest = 1e9;
  for (std::size_t i = 0; i < all.size(); ++i) {
    for (std::size_t j = i + 1; j < all.size(); ++j) closest = std::min(closest, (all[i] - all[j]).norm());
  }
  EXPECT_GT(closest, 1e-3);
}

TEST(FrequencyTable, DirectRatio) {
  const Corpus c = aab_corpus();
  const auto f = build_frequency_table(c);
  EXPECT_DOUBLE_EQ(f.normalized(c.vocabulary.id("a")), 1.0);
  EXPECT_DOUBLE_EQ(f.normalized(c.vocabulary.id("b")), 0.5);
  EXPECT_DOUBLE_EQ(f.normalized(c.vocabulary.id("zzz")), 0.0);
  EXPECT_DOUBLE_EQ(f.normalized(Vocabulary::kPadId), 0.0);
  EXPECT_DOUBLE_EQ(f.normalized(1000), 0.0);
  EXPECT_EQ(f.max_count(), 2);
}

TEST(FrequencyTable, ZipfCorpusMaximumIsExact) {
  SyntheticOptions opt;
  opt.n_dialogues = 300;
  const Corpus c = build_vocabulary(generate_synthetic(opt).corpus, 1);
  const auto f = build_frequency_table(c);
  std::map<std::string, long long> counts;
  for (const auto& d : c.dialogues) {
    for (const auto& u : d.utterances) {
      for (const auto& t : whitespace_tokenize(u.text)) ++counts[t];
    }
  }
  std::string top;
  long long best = 0;
  for (const auto& [t, n] : counts) {
    if (n > best) {
      best = n;
      top = t;
    }
  }
  EXPECT_EQ(f.max_count(), best);
  EXPECT_EQ(f.normalized(c.vocabulary.id(top)), 1.0);
  for (const auto& [t, n] : counts) EXPECT_EQ(f.count(c.vocabulary.id(t)), n) << t;
}

TEST(FrequencyTable, Errors) {
  EXPECT_THROW(build_frequency_table(Corpus{}), Error);
  Corpus c;
  c.dialogues.push_back({"a", {{Role::kCustomer, "x", Label::kNormal}}});
  EXPECT_THROW(build_frequency_table(c), Error);
}

TEST(Featurize, FiveTokenCustomerUtterance) {
  Corpus c = aab_corpus();
  const auto f = build_frequency_table(c);
  const Utterance u{Role::kCustomer, "n1 v2 a b a", Label::kNormal};
  const auto fu = featurize_utterance(u, c, f, SyntheticTagger{}, LexiconScorer{});
  EXPECT_EQ(fu.token_ids.size(), 5u);
  EXPECT_EQ(fu.role, 1);
  const auto oh = fu.pos_onehots(10);
  EXPECT_EQ(oh.rows(), 5);
  EXPECT_EQ(oh.cols(), 10);
  for (Eigen::Index r = 0; r < oh.rows(); ++r) EXPECT_EQ(oh.row(r).sum(), 1.0);
  EXPECT_EQ(fu.positions, (std::vector<int>{1, 2, 3, 4, 5}));
  EXPECT_EQ(fu.token_ids[0], Vocabulary::kUnknownId);
  for (double tf : fu.term_freqs) {
    EXPECT_GE(tf, 0.0);
    EXPECT_LE(tf, 1.0);
  }
  EXPECT_EQ(fu.term_freqs[2], 1.0);
}

TEST(Featurize, AgentRole) {
  Corpus c = aab_corpus();
  const auto fu = featurize_utterance({Role::kAgent, "a", Label::kNormal}, c, build_frequency_table(c), SyntheticTagger{},
                                      LexiconScorer{});
  EXPECT_EQ(fu.role, 0);
}

TEST(Emotion, DefaultLexicon) {
  LexiconScorer s;
  EXPECT_EQ(s.score("n1 v2 n3"), 0.0);
  EXPECT_LT(s.score("n1 terrible n3"), 0.0);
  EXPECT_GT(s.score("great n3"), 0.0);
  for (const auto& [tok, pol] : synthetic_polarity_lexicon()) EXPECT_DOUBLE_EQ(s.score("x " + tok), pol);
}

TEST(Emotion, LexiconFile) {
  const auto path = std::filesystem::temp_directory_path() / "dami_lexicon.tsv";
  {
    std::ofstream out(path);
    out << "bad\t-0.5\ngood\t1\n";
  }
  const auto s = LexiconScorer::from_file(path);
  EXPECT_DOUBLE_EQ(s.score("bad bad x"), -0.5);
  EXPECT_DOUBLE_EQ(s.score("bad good"), 0.25);
  {
    std::ofstream out(path);
    out << "bad\t-3\n";
  }
  EXPECT_THROW(LexiconScorer::from_file(path), Error);
  std::filesystem::remove(path);
}

TEST(Tagger, TableTagger) {
  TableTagger t({{"cat", "NN"}, {"runs", "VB"}}, "X");
  EXPECT_EQ(t.tag({"cat", "runs", "fast"}), (std::vector<std::string>{"NN", "VB", "X"}));
  EXPECT_EQ(t.tags(), (std::vector<std::string>{"NN", "VB", "X"}));
}

TEST(Featurize, TaggerContractViolations) {
  Corpus c = aab_corpus();
  const auto f = build_frequency_table(c);
  const Utterance u{Role::kCustomer, "a b", Label::kNormal};
  EXPECT_THROW(featurize_utterance(u, c, f, FixedTagger({"n"}), LexiconScorer{}), Error);
  EXPECT_THROW(featurize_utterance(u, c, f, FixedTagger({"n", "NOPE"}), LexiconScorer{}), Error);
  EXPECT_NO_THROW(featurize_utterance(u, c, f, FixedTagger({"n", "v"}), LexiconScorer{}));
}

TEST(Featurize, DeterministicAcrossCalls) {
  SyntheticOptions opt;
  opt.n_dialogues = 30;
  Corpus c = build_vocabulary(generate_synthetic(opt).corpus, 1);
  const Featurizer fz(c.vocabulary, synthetic_tagset(), build_frequency_table(c), std::make_shared<SyntheticTagger>(),
                      std::make_shared<LexiconScorer>());
  const auto a = fz.corpus(c);
  const auto b = fz.corpus(c);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].labels, b[i].labels);
    for (std::size_t t = 0; t < a[i].length(); ++t) {
      const auto& x = a[i].utterances[t];
      const auto& y = b[i].utterances[t];
      EXPECT_EQ(x.token_ids, y.token_ids);
      EXPECT_EQ(x.pos_ids, y.pos_ids);
      EXPECT_EQ(x.term_freqs, y.term_freqs);
      EXPECT_EQ(x.emotion, y.emotion);
      EXPECT_EQ(x.token_ids.size(), x.pos_ids.size());
      EXPECT_EQ(x.token_ids.size(), x.term_freqs.size());
      EXPECT_EQ(x.token_ids.size(), x.positions.size());
    }
  }
}
