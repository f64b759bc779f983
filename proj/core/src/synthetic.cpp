#include "dami/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>

#include "dami/error.hpp"
#include "dami/rng.hpp"

namespace dami {

namespace {

// Tag share of the content inventory, cycled by rank.
constexpr std::array<const char*, 20> kTagCycle = {"n", "v", "n", "a", "n", "v", "d", "n", "v", "p",
                                                   "n", "r", "v", "m", "n", "a", "q", "v", "u", "x"};

struct SpecialWord {
  const char* token;
  const char* tag;
};

constexpr SpecialWord kNegativeWords[] = {
    {"angry", "a"},   {"terrible", "a"},     {"useless", "a"}, {"awful", "a"},    {"annoyed", "v"},
    {"ridiculous", "a"}, {"worst", "a"}, {"disappointed", "v"}, {"complain", "v"}, {"waste", "n"},
};
constexpr double kNegativePolarity[] = {-0.9, -1.0, -0.8, -0.9, -0.7, -0.8, -1.0, -0.8, -0.6, -0.7};

constexpr SpecialWord kPositiveWords[] = {
    {"great", "a"}, {"thanks", "v"}, {"good", "a"}, {"nice", "a"}, {"perfect", "a"}, {"love", "v"}, {"glad", "a"},
};
constexpr double kPositivePolarity[] = {0.8, 0.6, 0.6, 0.5, 0.9, 0.8, 0.6};

constexpr SpecialWord kDemandWords[] = {
    {"human", "n"}, {"staff", "n"}, {"transfer", "v"}, {"manual", "a"}, {"person", "n"}, {"real", "a"},
};

constexpr SpecialWord kUniversalWords[] = {
    {"sorry", "a"},      {"unclear", "a"}, {"rephrase", "v"}, {"question", "n"},
    {"cannot", "v"}, {"understand", "v"}, {"again", "d"},
};

const std::map<std::string, std::string, std::less<>>& special_tags() {
  static const auto table = [] {
    std::map<std::string, std::string, std::less<>> t;
    auto add = [&](const auto& words) {
      for (const auto& w : words) t.emplace(w.token, w.tag);
    };
    add(kNegativeWords);
    add(kPositiveWords);
    add(kDemandWords);
    add(kUniversalWords);
    return t;
  }();
  return table;
}

class Generator {
 public:
  explicit Generator(const SyntheticOptions& opt) : opt_(opt) {
    content_.reserve(static_cast<std::size_t>(opt.content_vocabulary));
    cdf_.reserve(content_.capacity());
    double total = 0.0;
    for (int r = 0; r < opt.content_vocabulary; ++r) {
      content_.push_back(std::string(kTagCycle[static_cast<std::size_t>(r) % kTagCycle.size()]) + std::to_string(r));
      total += 1.0 / std::pow(static_cast<double>(r + 1), opt.zipf_exponent);
      cdf_.push_back(total);
    }
    for (auto& c : cdf_) c /= total;
  }

  Dialogue dialogue(int index, std::vector<PlantedTrigger>& planted) const {
    Rng rng = Rng::derive(opt_.seed, static_cast<std::uint64_t>(index));
    Dialogue d;
    char id[32];
    std::snprintf(id, sizeof id, "-%06d", index);
    d.session_id = opt_.session_prefix + id;

    const int extra = rng.poisson(std::max(0.0, opt_.mean_utterances - opt_.min_utterances));
    const int length = std::clamp(opt_.min_utterances + extra, 1, opt_.max_utterances);

    Role role = Role::kCustomer;
    std::set<std::string> used_texts;
    for (int t = 0; t < length; ++t) {
      if (t > 0 && !rng.bernoulli(opt_.same_role_rate)) {
        role = role == Role::kCustomer ? Role::kAgent : Role::kCustomer;
      }
      std::string text;
      for (int attempt = 0; attempt < 32; ++attempt) {
        text = normal_text(role, rng);
        if (used_texts.insert(text).second) break;
      }
      d.utterances.push_back({role, std::move(text), Label::kNormal});
    }

    if (rng.bernoulli(opt_.normal_fraction)) return d;

    std::array<bool, kTriggerCount> fire{};
    bool any = false;
    for (std::size_t k = 0; k < kTriggerCount; ++k) {
      fire[k] = rng.bernoulli(opt_.rates[static_cast<Trigger>(k)]);
      any = any || fire[k];
    }
    if (!any) {
      // A handoff dialogue always carries at least one trigger, drawn in
      // proportion to the configured rates.
      double u = rng.uniform() * opt_.rates.sum();
      std::size_t pick = kTriggerCount - 1;
      for (std::size_t k = 0; k < kTriggerCount; ++k) {
        const double r = opt_.rates[static_cast<Trigger>(k)];
        if (u < r) {
          pick = k;
          break;
        }
        u -= r;
      }
      while (opt_.rates[static_cast<Trigger>(pick)] <= 0.0) pick = (pick + kTriggerCount - 1) % kTriggerCount;
      fire[pick] = true;
    }

    std::vector<bool> taken(static_cast<std::size_t>(length), false);
    auto free_positions = [&](std::optional<Role> want, int from) {
      std::vector<int> out;
      for (int t = from; t < length; ++t) {
        if (!taken[static_cast<std::size_t>(t)] && (!want || d.utterances[static_cast<std::size_t>(t)].role == *want)) {
          out.push_back(t);
        }
      }
      return out;
    };
    auto mark = [&](Trigger trig, int pos, int source) {
      taken[static_cast<std::size_t>(pos)] = true;
      d.utterances[static_cast<std::size_t>(pos)].label = Label::kTransferable;
      planted.push_back({trig, pos, source});
    };

    if (fire[0]) {
      auto cands = free_positions(Role::kCustomer, 1);
      if (!cands.empty()) {
        const int pos = cands[rng.below(cands.size())];
        d.utterances[static_cast<std::size_t>(pos)].text = demand_text(rng);
        mark(Trigger::kExplicitDemand, pos, -1);
      }
    }
    if (fire[1]) {
      auto cands = free_positions(Role::kAgent, 1);
      if (!cands.empty()) {
        const int pos = cands[rng.below(cands.size())];
        d.utterances[static_cast<std::size_t>(pos)].text = universal_text(rng);
        mark(Trigger::kUnsatisfactoryAnswer, pos, -1);
      }
    }
    if (fire[2]) {
      auto cands = free_positions(Role::kCustomer, 1);
      if (!cands.empty()) {
        const int pos = cands[rng.below(cands.size())];
        auto& text = d.utterances[static_cast<std::size_t>(pos)].text;
        text = negative_text(text, rng);
        mark(Trigger::kNegativeEmotion, pos, -1);
      }
    }
    if (fire[3]) {
      // Target must have an earlier untouched utterance of the same role.
      std::vector<std::pair<int, int>> pairs;
      for (int t : free_positions(std::nullopt, 1)) {
        for (int j = 0; j < t; ++j) {
          if (!taken[static_cast<std::size_t>(j)] &&
              d.utterances[static_cast<std::size_t>(j)].role == d.utterances[static_cast<std::size_t>(t)].role) {
            pairs.emplace_back(t, j);
          }
        }
      }
      if (!pairs.empty()) {
        const auto [pos, src] = pairs[rng.below(pairs.size())];
        d.utterances[static_cast<std::size_t>(pos)].text = d.utterances[static_cast<std::size_t>(src)].text;
        mark(Trigger::kRepeatedUtterance, pos, src);
        taken[static_cast<std::size_t>(src)] = true;
      }
    }
    std::sort(planted.begin(), planted.end(), [](const auto& a, const auto& b) { return a.position < b.position; });
    return d;
  }

 private:
  const std::string& content_token(Rng& rng) const {
    const double u = rng.uniform();
    auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
    const auto idx = std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), content_.size() - 1);
    return content_[idx];
  }

  std::vector<std::string> content_tokens(int count, Rng& rng) const {
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) out.push_back(content_token(rng));
    return out;
  }

  int token_count(Role role, Rng& rng) const {
    const double base = std::max(0.0, opt_.mean_tokens - 2.0);
    const double mean = role == Role::kAgent ? base * 1.3 : base * 0.8;
    return 2 + rng.poisson(mean);
  }

  static std::string join(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i) out.push_back(' ');
      out += tokens[i];
    }
    return out;
  }

  template <class Words>
  static void insert_random(std::vector<std::string>& tokens, const Words& words, Rng& rng) {
    const auto& w = words[rng.below(std::size(words))];
    tokens.insert(tokens.begin() + static_cast<std::ptrdiff_t>(rng.below(tokens.size() + 1)), w.token);
  }

  std::string normal_text(Role role, Rng& rng) const {
    auto tokens = content_tokens(token_count(role, rng), rng);
    if (rng.bernoulli(role == Role::kCustomer ? 0.15 : 0.10)) insert_random(tokens, kPositiveWords, rng);
    return join(tokens);
  }

  std::string demand_text(Rng& rng) const {
    auto tokens = content_tokens(1 + static_cast<int>(rng.below(3)), rng);
    insert_random(tokens, kDemandWords, rng);
    insert_random(tokens, kDemandWords, rng);
    return join(tokens);
  }

  std::string universal_text(Rng& rng) const {
    auto tokens = content_tokens(static_cast<int>(rng.below(3)), rng);
    const int n = 3 + static_cast<int>(rng.below(3));
    for (int i = 0; i < n; ++i) insert_random(tokens, kUniversalWords, rng);
    return join(tokens);
  }

  std::string negative_text(const std::string& base, Rng& rng) const {
    auto tokens = whitespace_tokenize(base);
    const int n = 1 + static_cast<int>(rng.below(2));
    for (int i = 0; i < n; ++i) insert_random(tokens, kNegativeWords, rng);
    return join(tokens);
  }

  const SyntheticOptions& opt_;
  std::vector<std::string> content_;
  std::vector<double> cdf_;
};

}  // namespace

std::string_view to_string(Trigger trigger) {
  switch (trigger) {
    case Trigger::kExplicitDemand: return "explicit_demand";
    case Trigger::kUnsatisfactoryAnswer: return "unsatisfactory_answer";
    case Trigger::kNegativeEmotion: return "negative_emotion";
    case Trigger::kRepeatedUtterance: return "repeated_utterance";
  }
  return "unknown";
}

double TriggerRates::operator[](Trigger t) const {
  switch (t) {
    case Trigger::kExplicitDemand: return explicit_demand;
    case Trigger::kUnsatisfactoryAnswer: return unsatisfactory_answer;
    case Trigger::kNegativeEmotion: return negative_emotion;
    case Trigger::kRepeatedUtterance: return repeated_utterance;
  }
  return 0.0;
}

const std::vector<std::string>& synthetic_tagset() {
  static const std::vector<std::string> tags = {"n", "v", "a", "d", "p", "r", "m", "q", "u", "x"};
  return tags;
}

const std::vector<std::pair<std::string, double>>& synthetic_polarity_lexicon() {
  static const auto lexicon = [] {
    std::vector<std::pair<std::string, double>> out;
    for (std::size_t i = 0; i < std::size(kNegativeWords); ++i) out.emplace_back(kNegativeWords[i].token, kNegativePolarity[i]);
    for (std::size_t i = 0; i < std::size(kPositiveWords); ++i) out.emplace_back(kPositiveWords[i].token, kPositivePolarity[i]);
    return out;
  }();
  return lexicon;
}

std::string synthetic_tag(std::string_view token) {
  const auto& specials = special_tags();
  if (auto it = specials.find(token); it != specials.end()) return it->second;
  std::size_t i = 0;
  while (i < token.size() && token[i] >= 'a' && token[i] <= 'z') ++i;
  if (i == 0 || i == token.size()) return "x";
  for (std::size_t j = i; j < token.size(); ++j) {
    if (token[j] < '0' || token[j] > '9') return "x";
  }
  const auto prefix = token.substr(0, i);
  for (const auto& tag : synthetic_tagset()) {
    if (prefix == tag) return tag;
  }
  return "x";
}

SyntheticCorpus generate_synthetic(const SyntheticOptions& options) {
  if (options.n_dialogues < 1) throw Error("n_dialogues must be >= 1");
  for (std::size_t k = 0; k < kTriggerCount; ++k) {
    const double r = options.rates[static_cast<Trigger>(k)];
    if (!(r >= 0.0 && r <= 1.0)) throw Error(std::string("trigger rate ") + std::string(to_string(static_cast<Trigger>(k))) + " must lie in [0,1]");
  }
  if (!(options.normal_fraction >= 0.0 && options.normal_fraction <= 1.0)) throw Error("normal_fraction must lie in [0,1]");
  if (options.rates.sum() <= 0.0 && options.normal_fraction < 1.0) {
    throw Error("all trigger rates are zero but normal_fraction < 1: handoff dialogues cannot be labeled");
  }
  if (options.min_utterances < 1 || options.max_utterances < options.min_utterances) throw Error("invalid utterance length bounds");
  if (options.content_vocabulary < 1) throw Error("content_vocabulary must be >= 1");
  if (options.mean_tokens < 2.0) throw Error("mean_tokens must be >= 2");

  Generator gen(options);
  SyntheticCorpus out;
  out.corpus.pos_tagset = synthetic_tagset();
  out.corpus.dialogues.reserve(static_cast<std::size_t>(options.n_dialogues));
  out.planted.resize(static_cast<std::size_t>(options.n_dialogues));
  for (int i = 0; i < options.n_dialogues; ++i) {
    out.corpus.dialogues.push_back(gen.dialogue(i, out.planted[static_cast<std::size_t>(i)]));
  }
  return out;
}

}  // namespace dami
