#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dami/corpus.hpp"

namespace dami {

/// The four annotation triggers that make an utterance transferable.
enum class Trigger : std::uint8_t {
  kExplicitDemand = 0,
  kUnsatisfactoryAnswer = 1,
  kNegativeEmotion = 2,
  kRepeatedUtterance = 3,
};
inline constexpr std::size_t kTriggerCount = 4;

std::string_view to_string(Trigger trigger);

/// Per-dialogue probability that each trigger is planted.
struct TriggerRates {
  double explicit_demand = 0.10;
  double unsatisfactory_answer = 0.15;
  double negative_emotion = 0.30;
  double repeated_utterance = 0.40;

  double operator[](Trigger t) const;
  double sum() const { return explicit_demand + unsatisfactory_answer + negative_emotion + repeated_utterance; }
};

struct SyntheticOptions {
  int n_dialogues = 1000;
  std::uint64_t seed = 0;
  TriggerRates rates;
  /// Fraction of dialogues generated without any handoff.
  double normal_fraction = 0.08;
  double mean_utterances = 10.0;
  int min_utterances = 4;
  int max_utterances = 30;
  double mean_tokens = 8.0;
  /// Probability that an utterance keeps the previous speaker's role.
  double same_role_rate = 0.05;
  int content_vocabulary = 300;
  double zipf_exponent = 1.0;
  std::string session_prefix = "syn";
};

struct PlantedTrigger {
  Trigger trigger;
  int position;
  /// Source utterance for repeats, -1 otherwise.
  int source = -1;
};

struct SyntheticCorpus {
  Corpus corpus;
  /// One entry per dialogue, parallel to `corpus.dialogues`.
  std::vector<std::vector<PlantedTrigger>> planted;
};

/// The fixed 10-category tagset emitted by the generator.
const std::vector<std::string>& synthetic_tagset();

/// Built-in polarity lexicon; covers the sentiment words the generator emits.
const std::vector<std::pair<std::string, double>>& synthetic_polarity_lexicon();

/// Tag of a token from the synthetic inventory; "x" for anything else.
std::string synthetic_tag(std::string_view token);

SyntheticCorpus generate_synthetic(const SyntheticOptions& options);

}  // namespace dami
