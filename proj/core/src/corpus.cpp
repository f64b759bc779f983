#include "dami/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "dami/error.hpp"
#include "dami/rng.hpp"
#include "json.hpp"

namespace dami {

namespace {

using ordered_json = nlohmann::ordered_json;

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

Dialogue parse_record(const nlohmann::json& record) {
  if (!record.is_object()) throw Error("record is not a JSON object");
  if (!record.contains("session_id") || !record["session_id"].is_string()) {
    throw Error("missing string field \"session_id\"");
  }
  if (!record.contains("utterances") || !record["utterances"].is_array()) {
    throw Error("missing array field \"utterances\"");
  }
  Dialogue dialogue;
  dialogue.session_id = record["session_id"].get<std::string>();
  const auto& utts = record["utterances"];
  if (utts.empty()) throw Error("empty utterance list in session " + dialogue.session_id);
  dialogue.utterances.reserve(utts.size());
  for (std::size_t i = 0; i < utts.size(); ++i) {
    const auto& u = utts[i];
    const std::string where = "utterance " + std::to_string(i) + ": ";
    if (!u.is_object()) throw Error(where + "not a JSON object");
    for (const char* field : {"role", "text", "label"}) {
      if (!u.contains(field)) throw Error(where + "missing field \"" + field + "\"");
    }
    if (!u["role"].is_string()) throw Error(where + "\"role\" must be a string");
    if (!u["text"].is_string()) throw Error(where + "\"text\" must be a string");
    if (!u["label"].is_number_integer()) throw Error(where + "\"label\" must be 0 or 1");
    Utterance utt;
    utt.role = parse_role(u["role"].get<std::string>());
    utt.text = u["text"].get<std::string>();
    if (trim(utt.text).empty()) throw Error(where + "empty text");
    const auto label = u["label"].get<long long>();
    if (label != 0 && label != 1) throw Error(where + "\"label\" must be 0 or 1");
    utt.label = label == 1 ? Label::kTransferable : Label::kNormal;
    dialogue.utterances.push_back(std::move(utt));
  }
  return dialogue;
}

}  // namespace

std::string_view to_string(Role role) { return role == Role::kCustomer ? "customer" : "agent"; }

Role parse_role(std::string_view text) {
  if (text == "customer") return Role::kCustomer;
  if (text == "agent") return Role::kAgent;
  throw Error("unknown role \"" + std::string(text) + "\" (expected customer or agent)");
}

std::vector<int> Dialogue::transferable_positions() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    if (utterances[i].label == Label::kTransferable) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<std::string> whitespace_tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  tokens_.reserve(tokens.size() + 2);
  tokens_.emplace_back(kPadToken);
  tokens_.emplace_back(kUnknownToken);
  for (auto& t : tokens) {
    if (t == kPadToken || t == kUnknownToken) continue;
    if (index_.count(t)) throw Error("duplicate vocabulary token \"" + t + "\"");
    index_.emplace(t, static_cast<int>(tokens_.size()));
    tokens_.push_back(std::move(t));
  }
  index_.emplace(std::string(kPadToken), kPadId);
  index_.emplace(std::string(kUnknownToken), kUnknownId);
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end() || it->second == kPadId) return kUnknownId;
  return it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it != index_.end() && it->second >= 2;
}

// ---------------------------------------------------------------------------
// JSONL

Corpus ingest_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus file " + path.string());
  return ingest_jsonl(in, path.string());
}

Corpus ingest_jsonl(std::istream& in, std::string_view source_name) {
  Corpus corpus;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = std::string(source_name) + ":" + std::to_string(line_no) + ": ";
    Dialogue dialogue;
    try {
      dialogue = parse_record(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw Error(where + "malformed JSON (" + e.what() + ")");
    } catch (const Error& e) {
      throw Error(where + e.what());
    }
    if (!seen.insert(dialogue.session_id).second) {
      throw Error(where + "duplicate session_id \"" + dialogue.session_id + "\"");
    }
    corpus.dialogues.push_back(std::move(dialogue));
  }
  return corpus;
}

std::string to_json_line(const Dialogue& dialogue) {
  ordered_json record;
  record["session_id"] = dialogue.session_id;
  ordered_json utts = ordered_json::array();
  for (const auto& u : dialogue.utterances) {
    ordered_json item;
    item["role"] = std::string(to_string(u.role));
    item["text"] = u.text;
    item["label"] = u.label == Label::kTransferable ? 1 : 0;
    utts.push_back(std::move(item));
  }
  record["utterances"] = std::move(utts);
  return record.dump();
}

void write_jsonl(const Corpus& corpus, std::ostream& out) {
  for (const auto& d : corpus.dialogues) out << to_json_line(d) << '\n';
}

void write_jsonl(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write corpus file " + path.string());
  write_jsonl(corpus, out);
  if (!out) throw Error("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Splitting and vocabulary

CorpusSplits split(const Corpus& corpus, const SplitSpec& spec) {
  if (corpus.empty()) throw Error("cannot split an empty corpus");
  if (spec.train <= 0 || spec.valid <= 0 || spec.test <= 0) throw Error("split fractions must be positive");
  if (std::abs(spec.train + spec.valid + spec.test - 1.0) > 1e-9) throw Error("split fractions must sum to 1");

  const std::size_t n = corpus.size();
  const auto n_valid = static_cast<std::size_t>(std::llround(spec.valid * static_cast<double>(n)));
  const auto n_test = static_cast<std::size_t>(std::llround(spec.test * static_cast<double>(n)));
  if (n_valid == 0 || n_test == 0 || n_valid + n_test >= n) {
    const auto min_size = static_cast<long long>(std::ceil(0.5 / std::min({spec.train, spec.valid, spec.test})));
    throw Error("corpus of " + std::to_string(n) + " dialogues leaves an empty split; need at least " +
                std::to_string(std::max(3LL, min_size)) + " dialogues for these fractions");
  }
  const std::size_t n_train = n - n_valid - n_test;

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(spec.seed);
  rng.shuffle(order);

  CorpusSplits out;
  for (Corpus* part : {&out.train, &out.valid, &out.test}) {
    part->vocabulary = corpus.vocabulary;
    part->pos_tagset = corpus.pos_tagset;
  }
  for (std::size_t i = 0; i < n; ++i) {
    Corpus& part = i < n_train ? out.train : (i < n_train + n_valid ? out.valid : out.test);
    part.dialogues.push_back(corpus.dialogues[order[i]]);
  }
  return out;
}

Corpus build_vocabulary(const Corpus& corpus, int min_count, const Tokenizer& tokenize) {
  if (min_count < 1) throw Error("min_count must be >= 1");
  if (corpus.empty()) throw Error("cannot build a vocabulary from an empty corpus");
  std::map<std::string, long long> counts;
  for (const auto& d : corpus.dialogues) {
    for (const auto& u : d.utterances) {
      for (auto& tok : tokenize(u.text)) ++counts[std::move(tok)];
    }
  }
  std::vector<std::pair<std::string, long long>> kept;
  for (auto& [tok, c] : counts) {
    if (c >= min_count) kept.emplace_back(tok, c);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens;
  tokens.reserve(kept.size());
  for (auto& kv : kept) tokens.push_back(std::move(kv.first));

  Corpus out = corpus;
  out.vocabulary = Vocabulary(std::move(tokens));
  return out;
}

CorpusStats corpus_stats(const Corpus& corpus, const Tokenizer& tokenize) {
  CorpusStats s;
  s.dialogues = corpus.size();
  double tok_sum = 0.0;
  double tok_sq = 0.0;
  for (const auto& d : corpus.dialogues) {
    bool any = false;
    for (const auto& u : d.utterances) {
      ++s.utterances;
      if (u.label == Label::kTransferable) {
        ++s.transferable_utterances;
        any = true;
      }
      const auto n = static_cast<double>(tokenize(u.text).size());
      tok_sum += n;
      tok_sq += n * n;
    }
    if (!any) ++s.normal_dialogues;
  }
  if (s.dialogues > 0) s.mean_utterances = static_cast<double>(s.utterances) / static_cast<double>(s.dialogues);
  if (s.utterances > 0) {
    const double n = static_cast<double>(s.utterances);
    s.mean_tokens = tok_sum / n;
    s.std_tokens = std::sqrt(std::max(0.0, tok_sq / n - s.mean_tokens * s.mean_tokens));
  }
  return s;
}

}  // namespace dami
