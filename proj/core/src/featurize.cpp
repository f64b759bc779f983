#include "dami/featurize.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "dami/error.hpp"
#include "dami/synthetic.hpp"

namespace dami {

Eigen::MatrixXd FeaturizedUtterance::pos_onehots(int n_tags) const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(pos_ids.size()), n_tags);
  for (std::size_t i = 0; i < pos_ids.size(); ++i) out(static_cast<Eigen::Index>(i), pos_ids[i]) = 1.0;
  return out;
}

Eigen::VectorXd positional_encoding(int position, int dim) {
  if (dim <= 0 || dim % 2 != 0) throw Error("positional encoding dimension must be even and positive, got " + std::to_string(dim));
  if (position < 1) throw Error("positions are 1-based");
  Eigen::VectorXd pe(dim);
  const double pos = static_cast<double>(position - 1);
  for (int i = 0; i < dim / 2; ++i) {
    const double angle = pos / std::pow(10000.0, 2.0 * i / dim);
    pe(2 * i) = std::sin(angle);
    pe(2 * i + 1) = std::cos(angle);
  }
  return pe;
}

// ---------------------------------------------------------------------------

FrequencyTable::FrequencyTable(std::vector<long long> counts) : counts_(std::move(counts)) {
  for (long long c : counts_) max_count_ = std::max(max_count_, c);
}

long long FrequencyTable::count(int token_id) const {
  if (token_id < 2 || static_cast<std::size_t>(token_id) >= counts_.size()) return 0;
  return counts_[static_cast<std::size_t>(token_id)];
}

double FrequencyTable::normalized(int token_id) const {
  if (max_count_ == 0) return 0.0;
  return static_cast<double>(count(token_id)) / static_cast<double>(max_count_);
}

FrequencyTable build_frequency_table(const Corpus& corpus, const Tokenizer& tokenize) {
  if (corpus.empty()) throw Error("cannot build a frequency table from an empty corpus");
  if (!corpus.has_vocabulary()) throw Error("frequency table requires a vocabulary; call build_vocabulary first");
  std::vector<long long> counts(static_cast<std::size_t>(corpus.vocabulary.size()), 0);
  for (const auto& d : corpus.dialogues) {
    for (const auto& u : d.utterances) {
      for (const auto& tok : tokenize(u.text)) {
        const int id = corpus.vocabulary.id(tok);
        if (id >= 2) ++counts[static_cast<std::size_t>(id)];
      }
    }
  }
  return FrequencyTable(std::move(counts));
}

// ---------------------------------------------------------------------------
// Plug-ins

std::vector<std::string> SyntheticTagger::tag(const std::vector<std::string>& tokens) const {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(synthetic_tag(t));
  return out;
}

TableTagger::TableTagger(std::unordered_map<std::string, std::string> table, std::string fallback)
    : table_(std::move(table)), fallback_(std::move(fallback)) {}

TableTagger TableTagger::from_file(const std::filesystem::path& path, std::string fallback) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open tag table " + path.string());
  std::unordered_map<std::string, std::string> table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw Error(path.string() + ":" + std::to_string(line_no) + ": expected token<TAB>tag");
    table[line.substr(0, tab)] = line.substr(tab + 1);
  }
  return TableTagger(std::move(table), std::move(fallback));
}

std::vector<std::string> TableTagger::tag(const std::vector<std::string>& tokens) const {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    auto it = table_.find(t);
    out.push_back(it == table_.end() ? fallback_ : it->second);
  }
  return out;
}

std::vector<std::string> TableTagger::tags() const {
  std::set<std::string> seen{fallback_};
  for (const auto& [tok, tag] : table_) seen.insert(tag);
  return {seen.begin(), seen.end()};
}

LexiconScorer::LexiconScorer() {
  for (const auto& [tok, pol] : synthetic_polarity_lexicon()) lexicon_.emplace(tok, pol);
}

LexiconScorer::LexiconScorer(std::unordered_map<std::string, double> lexicon) : lexicon_(std::move(lexicon)) {
  for (const auto& [tok, pol] : lexicon_) {
    if (!(pol >= -1.0 && pol <= 1.0)) throw Error("polarity of \"" + tok + "\" outside [-1, 1]");
  }
}

LexiconScorer LexiconScorer::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open lexicon " + path.string());
  std::unordered_map<std::string, double> lex;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw Error(where + "expected token<TAB>polarity");
    double pol = 0.0;
    try {
      std::size_t used = 0;
      pol = std::stod(line.substr(tab + 1), &used);
      if (used != line.size() - tab - 1) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw Error(where + "polarity is not a number");
    }
    if (!(pol >= -1.0 && pol <= 1.0)) throw Error(where + "polarity outside [-1, 1]");
    lex[line.substr(0, tab)] = pol;
  }
  return LexiconScorer(std::move(lex));
}

double LexiconScorer::score(std::string_view text) const {
  double sum = 0.0;
  int hits = 0;
  for (const auto& tok : whitespace_tokenize(text)) {
    if (auto it = lexicon_.find(tok); it != lexicon_.end()) {
      sum += it->second;
      ++hits;
    }
  }
  return hits == 0 ? 0.0 : std::clamp(sum / hits, -1.0, 1.0);
}

// ---------------------------------------------------------------------------

namespace {

FeaturizedUtterance featurize_impl(const Utterance& utt, const Vocabulary& vocab,
                                   const std::unordered_map<std::string, int>& tag_index, const FrequencyTable& freq,
                                   const Tagger& tagger, const EmotionScorer& scorer) {
  const auto tokens = tagger.tokenize(utt.text);
  if (tokens.empty()) throw Error("tokenizer produced no tokens for \"" + utt.text + "\"");
  const auto tags = tagger.tag(tokens);
  if (tags.size() != tokens.size()) {
    throw Error("tagger returned " + std::to_string(tags.size()) + " tags for " + std::to_string(tokens.size()) + " tokens");
  }
  FeaturizedUtterance f;
  const std::size_t n = tokens.size();
  f.token_ids.reserve(n);
  f.pos_ids.reserve(n);
  f.term_freqs.reserve(n);
  f.positions.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int id = vocab.id(tokens[i]);
    f.token_ids.push_back(id);
    auto it = tag_index.find(tags[i]);
    if (it == tag_index.end()) throw Error("tag \"" + tags[i] + "\" is not in the corpus tagset");
    f.pos_ids.push_back(it->second);
    f.term_freqs.push_back(freq.normalized(id));
    f.positions.push_back(static_cast<int>(i) + 1);
  }
  const double e = scorer.score(utt.text);
  if (!std::isfinite(e)) throw Error("emotion scorer returned a non-finite value");
  f.emotion = std::clamp(e, -1.0, 1.0);
  f.role = utt.role == Role::kCustomer ? 1 : 0;
  return f;
}

std::unordered_map<std::string, int> index_tags(const std::vector<std::string>& tagset) {
  if (tagset.empty()) throw Error("empty POS tagset");
  std::unordered_map<std::string, int> out;
  for (std::size_t i = 0; i < tagset.size(); ++i) {
    if (!out.emplace(tagset[i], static_cast<int>(i)).second) throw Error("duplicate tag \"" + tagset[i] + "\" in tagset");
  }
  return out;
}

}  // namespace

FeaturizedUtterance featurize_utterance(const Utterance& utt, const Corpus& corpus, const FrequencyTable& freq,
                                        const Tagger& tagger, const EmotionScorer& scorer) {
  return featurize_impl(utt, corpus.vocabulary, index_tags(corpus.pos_tagset), freq, tagger, scorer);
}

Featurizer::Featurizer(Vocabulary vocabulary, std::vector<std::string> tagset, FrequencyTable freq,
                       std::shared_ptr<const Tagger> tagger, std::shared_ptr<const EmotionScorer> scorer)
    : vocabulary_(std::move(vocabulary)),
      tagset_(std::move(tagset)),
      tag_index_(index_tags(tagset_)),
      freq_(std::move(freq)),
      tagger_(std::move(tagger)),
      scorer_(std::move(scorer)) {
  if (!tagger_ || !scorer_) throw Error("featurizer needs a tagger and an emotion scorer");
}

FeaturizedUtterance Featurizer::utterance(const Utterance& utt) const {
  return featurize_impl(utt, vocabulary_, tag_index_, freq_, *tagger_, *scorer_);
}

FeaturizedDialogue Featurizer::dialogue(const Dialogue& d) const {
  FeaturizedDialogue out;
  out.session_id = d.session_id;
  out.utterances.reserve(d.length());
  out.labels.reserve(d.length());
  for (const auto& u : d.utterances) {
    out.utterances.push_back(utterance(u));
    out.labels.push_back(u.label == Label::kTransferable ? 1 : 0);
  }
  return out;
}

std::vector<FeaturizedDialogue> Featurizer::corpus(const Corpus& c) const {
  std::vector<FeaturizedDialogue> out;
  out.reserve(c.size());
  for (const auto& d : c.dialogues) out.push_back(dialogue(d));
  return out;
}

}  // namespace dami
