#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "dami/corpus.hpp"
#include "dami/error.hpp"
#include "dami/synthetic.hpp"

using namespace dami;

namespace {

Corpus corpus_of(int n) {
  Corpus c;
  for (int i = 0; i < n; ++i) {
    c.dialogues.push_back({"s" + std::to_string(i), {{Role::kCustomer, "hello " + std::to_string(i), Label::kNormal}}});
  }
  return c;
}

std::string error_of(const std::string& text) {
  std::istringstream in(text);
  try {
    ingest_jsonl(in, "mem");
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Ingest, TwoUtteranceDialogue) {
  std::istringstream in(
      R"({"session_id":"a","utterances":[{"role":"customer","text":"hi there","label":0},{"role":"agent","text":"yes","label":1}]})"
      "\n");
  const Corpus c = ingest_jsonl(in);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c.dialogues[0].length(), 2u);
  EXPECT_EQ(c.dialogues[0].utterances[0].role, Role::kCustomer);
  EXPECT_EQ(c.dialogues[0].utterances[1].label, Label::kTransferable);
  EXPECT_EQ(c.dialogues[0].transferable_positions(), std::vector<int>{1});
}

TEST(Ingest, MissingLabelNamesLine) {
  const std::string msg = error_of(
      R"({"session_id":"a","utterances":[{"role":"customer","text":"x","label":0}]})"
      "\n"
      R"({"session_id":"b","utterances":[{"role":"customer","text":"x"}]})"
      "\n");
  EXPECT_NE(msg.find("mem:2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("label"), std::string::npos) << msg;
}

TEST(Ingest, Rejections) {
  EXPECT_NE(error_of(R"({"session_id":"a","utterances":[{"role":"bot","text":"x","label":0}]})").find("role"),
            std::string::npos);
  EXPECT_NE(error_of(R"({"session_id":"a","utterances":[]})").find("empty utterance list"), std::string::npos);
  EXPECT_NE(error_of(R"({"session_id":"a","utterances":[{"role":"agent","text":"   ","label":0}]})").find("empty text"),
            std::string::npos);
  EXPECT_NE(error_of(R"({"session_id":"a","utterances":[{"role":"agent","text":"x","label":2}]})").find("label"),
            std::string::npos);
  EXPECT_NE(error_of("{not json\n").find("mem:1"), std::string::npos);
  const std::string dup = R"({"session_id":"a","utterances":[{"role":"agent","text":"x","label":0}]})";
  EXPECT_NE(error_of(dup + "\n" + dup + "\n").find("duplicate session_id"), std::string::npos);
}

TEST(Ingest, BlankLinesSkipped) {
  std::istringstream in("\n" R"({"session_id":"a","utterances":[{"role":"agent","text":"x","label":0}]})" "\n\n");
  EXPECT_EQ(ingest_jsonl(in).size(), 1u);
}

TEST(Ingest, SerializeRoundTripIsIdentity) {
  SyntheticOptions opt;
  opt.n_dialogues = 50;
  opt.seed = 3;
  const Corpus original = generate_synthetic(opt).corpus;
  std::stringstream buf;
  write_jsonl(original, buf);
  const Corpus back = ingest_jsonl(buf);
  EXPECT_EQ(back.dialogues, original.dialogues);
}

TEST(Ingest, ManyRecordsFromFile) {
  const auto path = std::filesystem::temp_directory_path() / "dami_ingest_3500.jsonl";
  {
    std::ofstream out(path);
    for (int i = 0; i < 3500; ++i) {
      out << R"({"session_id":"c)" << i << R"(","utterances":[{"role":"customer","text":"w","label":0}]})" << '\n';
    }
  }
  EXPECT_EQ(ingest_jsonl(path).size(), 3500u);
  std::filesystem::remove(path);
}

TEST(Split, TenDialogues) {
  const auto s = split(corpus_of(10), {0.8, 0.1, 0.1, 7});
  EXPECT_EQ(s.train.size(), 8u);
  EXPECT_EQ(s.valid.size(), 1u);
  EXPECT_EQ(s.test.size(), 1u);
}

TEST(Split, DeterministicGivenSeed) {
  const Corpus c = corpus_of(40);
  const auto a = split(c, {0.8, 0.1, 0.1, 11});
  const auto b = split(c, {0.8, 0.1, 0.1, 11});
  EXPECT_EQ(a.train.dialogues, b.train.dialogues);
  EXPECT_EQ(a.valid.dialogues, b.valid.dialogues);
  EXPECT_EQ(a.test.dialogues, b.test.dialogues);
  const auto other = split(c, {0.8, 0.1, 0.1, 12});
  EXPECT_NE(a.train.dialogues, other.train.dialogues);
}

TEST(Split, HundredDialoguesPartitionOriginalSet) {
  const Corpus c = corpus_of(100);
  const auto s = split(c, {0.8, 0.1, 0.1, 5});
  ASSERT_EQ(s.train.size(), 80u);
  ASSERT_EQ(s.valid.size(), 10u);
  ASSERT_EQ(s.test.size(), 10u);
  std::multiset<std::string> seen;
  for (const Corpus* part : {&s.train, &s.valid, &s.test}) {
    for (const auto& d : part->dialogues) seen.insert(d.session_id);
  }
  std::multiset<std::string> expected;
  for (const auto& d : c.dialogues) expected.insert(d.session_id);
  EXPECT_EQ(seen, expected);
}

TEST(Split, TinyCorpusErrors) {
  try {
    split(corpus_of(3), {0.8, 0.1, 0.1, 0});
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("at least"), std::string::npos) << e.what();
  }
  EXPECT_THROW(split(Corpus{}, {}), Error);
  EXPECT_THROW(split(corpus_of(20), {0.5, 0.1, 0.1, 0}), Error);
}

TEST(Vocabulary, ReservedIds) {
  Vocabulary v({"x"});
  EXPECT_EQ(v.token(Vocabulary::kPadId), "<pad>");
  EXPECT_EQ(v.token(Vocabulary::kUnknownId), "<unk>");
  // Literal "<pad>" in text is an ordinary unseen token, never padding.
  EXPECT_EQ(v.id("<pad>"), Vocabulary::kUnknownId);
  EXPECT_EQ(v.id("never-seen"), Vocabulary::kUnknownId);
  EXPECT_EQ(v.id("x"), 2);
  EXPECT_EQ(v.size(), 3);
}

TEST(Vocabulary, MinCount) {
  Corpus c;
  c.dialogues.push_back({"a", {{Role::kCustomer, "a a b", Label::kNormal}}});
  const Corpus one = build_vocabulary(c, 1);
  EXPECT_TRUE(one.vocabulary.contains("a"));
  EXPECT_TRUE(one.vocabulary.contains("b"));
  EXPECT_EQ(one.vocabulary.size(), 4);
  EXPECT_EQ(one.vocabulary.id("a"), 2);
  const Corpus two = build_vocabulary(c, 2);
  EXPECT_TRUE(two.vocabulary.contains("a"));
  EXPECT_EQ(two.vocabulary.id("b"), Vocabulary::kUnknownId);
  EXPECT_THROW(build_vocabulary(Corpus{}, 1), Error);
  EXPECT_THROW(build_vocabulary(c, 0), Error);
}

TEST(Vocabulary, SyntheticCoverageAndDeterminism) {
  SyntheticOptions opt;
  opt.n_dialogues = 500;
  opt.seed = 2;
  const Corpus c = generate_synthetic(opt).corpus;
  const Corpus a = build_vocabulary(c, 1);
  const Corpus b = build_vocabulary(c, 1);
  EXPECT_EQ(a.vocabulary, b.vocabulary);
  for (const auto& d : c.dialogues) {
    for (const auto& u : d.utterances) {
      for (const auto& tok : whitespace_tokenize(u.text)) EXPECT_TRUE(a.vocabulary.contains(tok)) << tok;
    }
  }
}

TEST(Tokenize, Whitespace) {
  EXPECT_EQ(whitespace_tokenize("  a\tb \n c "), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_TRUE(whitespace_tokenize("   ").empty());
}
