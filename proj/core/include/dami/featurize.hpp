#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "dami/corpus.hpp"

namespace dami {

/// Feature bundle for one utterance. All per-token sequences share one length.
struct FeaturizedUtterance {
  std::vector<int> token_ids;
  /// Index into the corpus tagset, one per token.
  std::vector<int> pos_ids;
  std::vector<double> term_freqs;
  /// 1-based token positions.
  std::vector<int> positions;
  double emotion = 0.0;
  /// 1 = customer, 0 = agent.
  int role = 1;

  std::size_t length() const { return token_ids.size(); }
  /// |u| x n binary matrix, one hot per row.
  Eigen::MatrixXd pos_onehots(int n_tags) const;
};

struct FeaturizedDialogue {
  std::string session_id;
  std::vector<FeaturizedUtterance> utterances;
  /// Gold labels, 0 or 1, parallel to `utterances`.
  std::vector<int> labels;

  std::size_t length() const { return utterances.size(); }
};

/// Sinusoidal encoding of a 1-based position.
Eigen::VectorXd positional_encoding(int position, int dim);

/// Corpus-level token counts, normalized by the largest count.
class FrequencyTable {
 public:
  FrequencyTable() = default;
  FrequencyTable(std::vector<long long> counts);

  /// count(id) / max_count; 0 for ids never seen (and for the reserved ids).
  double normalized(int token_id) const;
  long long count(int token_id) const;
  long long max_count() const { return max_count_; }
  const std::vector<long long>& counts() const { return counts_; }

 private:
  std::vector<long long> counts_;
  long long max_count_ = 0;
};

class Tagger {
 public:
  virtual ~Tagger() = default;
  virtual std::vector<std::string> tokenize(std::string_view text) const { return whitespace_tokenize(text); }
  /// One tag per token.
  virtual std::vector<std::string> tag(const std::vector<std::string>& tokens) const = 0;
};

class EmotionScorer {
 public:
  virtual ~EmotionScorer() = default;
  virtual double score(std::string_view text) const = 0;
};

/// Tags tokens of the synthetic inventory.
class SyntheticTagger final : public Tagger {
 public:
  std::vector<std::string> tag(const std::vector<std::string>& tokens) const override;
};

/// Looks tags up in a token -> tag table, with a fallback for unlisted tokens.
/// File format: `token<TAB>tag` per line.
class TableTagger final : public Tagger {
 public:
  TableTagger(std::unordered_map<std::string, std::string> table, std::string fallback);
  static TableTagger from_file(const std::filesystem::path& path, std::string fallback);
  std::vector<std::string> tag(const std::vector<std::string>& tokens) const override;
  /// Sorted distinct tags the tagger can emit, fallback included.
  std::vector<std::string> tags() const;

 private:
  std::unordered_map<std::string, std::string> table_;
  std::string fallback_;
};

/// Mean polarity of the lexicon tokens present in the text, 0 when none match.
class LexiconScorer final : public EmotionScorer {
 public:
  /// Uses the built-in lexicon.
  LexiconScorer();
  explicit LexiconScorer(std::unordered_map<std::string, double> lexicon);
  /// Reads `token<TAB>polarity` lines, polarity in [-1, 1].
  static LexiconScorer from_file(const std::filesystem::path& path);

  double score(std::string_view text) const override;
  const std::unordered_map<std::string, double>& lexicon() const { return lexicon_; }

 private:
  std::unordered_map<std::string, double> lexicon_;
};

FrequencyTable build_frequency_table(const Corpus& corpus, const Tokenizer& tokenize = whitespace_tokenize);

FeaturizedUtterance featurize_utterance(const Utterance& utt, const Corpus& corpus, const FrequencyTable& freq,
                                        const Tagger& tagger, const EmotionScorer& scorer);

/// Binds the lookup tables once so that whole corpora can be featurized.
class Featurizer {
 public:
  Featurizer(Vocabulary vocabulary, std::vector<std::string> tagset, FrequencyTable freq,
             std::shared_ptr<const Tagger> tagger, std::shared_ptr<const EmotionScorer> scorer);

  FeaturizedUtterance utterance(const Utterance& utt) const;
  FeaturizedDialogue dialogue(const Dialogue& d) const;
  std::vector<FeaturizedDialogue> corpus(const Corpus& c) const;

  const Vocabulary& vocabulary() const { return vocabulary_; }
  const std::vector<std::string>& tagset() const { return tagset_; }
  const FrequencyTable& frequencies() const { return freq_; }

 private:
  Vocabulary vocabulary_;
  std::vector<std::string> tagset_;
  std::unordered_map<std::string, int> tag_index_;
  FrequencyTable freq_;
  std::shared_ptr<const Tagger> tagger_;
  std::shared_ptr<const EmotionScorer> scorer_;
};

}  // namespace dami
