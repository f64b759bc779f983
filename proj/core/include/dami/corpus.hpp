#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

namespace dami {

enum class Role : std::uint8_t { kAgent = 0, kCustomer = 1 };
enum class Label : std::uint8_t { kNormal = 0, kTransferable = 1 };

std::string_view to_string(Role role);
Role parse_role(std::string_view text);

struct Utterance {
  Role role = Role::kCustomer;
  std::string text;
  Label label = Label::kNormal;

  friend bool operator==(const Utterance&, const Utterance&) = default;
};

struct Dialogue {
  std::string session_id;
  std::vector<Utterance> utterances;

  std::size_t length() const { return utterances.size(); }
  /// 0-based positions of transferable utterances.
  std::vector<int> transferable_positions() const;

  friend bool operator==(const Dialogue&, const Dialogue&) = default;
};

/// Splits text on ASCII whitespace. Real corpora are expected to be
/// pre-segmented (one space between words).
std::vector<std::string> whitespace_tokenize(std::string_view text);

/// Token to id map. Ids 0 and 1 are reserved for padding and unknown.
class Vocabulary {
 public:
  static constexpr int kPadId = 0;
  static constexpr int kUnknownId = 1;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnknownToken = "<unk>";

  Vocabulary();
  explicit Vocabulary(std::vector<std::string> tokens);

  int id(std::string_view token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  bool contains(std::string_view token) const;
  /// Number of ids including the two reserved ones.
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct Corpus {
  std::vector<Dialogue> dialogues;
  Vocabulary vocabulary;
  std::vector<std::string> pos_tagset;

  bool empty() const { return dialogues.empty(); }
  std::size_t size() const { return dialogues.size(); }
  bool has_vocabulary() const { return vocabulary.size() > 2; }
};

struct SplitSpec {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
  std::uint64_t seed = 0;
};

struct CorpusSplits {
  Corpus train;
  Corpus valid;
  Corpus test;
};

/// Reads one dialogue record per line. Blank lines are skipped.
Corpus ingest_jsonl(const std::filesystem::path& path);
Corpus ingest_jsonl(std::istream& in, std::string_view source_name = "<stream>");

/// Serializes one dialogue per line in the same schema `ingest_jsonl` reads.
void write_jsonl(const Corpus& corpus, const std::filesystem::path& path);
void write_jsonl(const Corpus& corpus, std::ostream& out);
std::string to_json_line(const Dialogue& dialogue);

/// Random dialogue-level partition; the vocabulary and tagset are copied to
/// every part.
CorpusSplits split(const Corpus& corpus, const SplitSpec& spec);

using Tokenizer = std::function<std::vector<std::string>(std::string_view)>;

/// Returns a copy of `corpus` with a vocabulary built from its token counts.
/// Ids are assigned by descending count, ties broken lexicographically.
Corpus build_vocabulary(const Corpus& corpus, int min_count, const Tokenizer& tokenize = whitespace_tokenize);

struct CorpusStats {
  std::size_t dialogues = 0;
  std::size_t normal_dialogues = 0;
  std::size_t utterances = 0;
  std::size_t transferable_utterances = 0;
  double mean_utterances = 0.0;
  double mean_tokens = 0.0;
  double std_tokens = 0.0;
};

CorpusStats corpus_stats(const Corpus& corpus, const Tokenizer& tokenize = whitespace_tokenize);

}  // namespace dami
