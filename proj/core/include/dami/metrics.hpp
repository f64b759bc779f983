#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dami/corpus.hpp"

namespace dami {

/// Tolerance-aware session scoring parameters.
struct GttConfig {
  /// Tolerance range T.
  int tolerance = 1;
  /// Asymmetry between early (< 0 favors) and delayed (> 0 penalizes) handoff.
  double lambda = 0.0;
  double epsilon = 1e-6;

  void validate() const;
};

struct SessionPrediction {
  std::string session_id;
  /// Probability of the transferable class per utterance.
  std::vector<double> probs;
  /// Hard labels, 0 or 1.
  std::vector<int> labels;

  std::vector<int> transferable_positions() const;
};

/// Hard label rule: argmax when no threshold is given, p >= threshold otherwise.
std::vector<int> hard_labels(std::span<const double> transferable_probs, std::optional<double> threshold = std::nullopt);

/// Per-session score in [0, 1]. Positions are 0-based and must be distinct
/// and below `length`.
double gtt_session(std::span<const int> gold_positions, std::span<const int> pred_positions, const GttConfig& config,
                   int length);

/// Unweighted mean of per-session scores. Predictions are matched to gold
/// dialogues by session id.
double gtt_corpus(const Corpus& gold, std::span<const SessionPrediction> preds, const GttConfig& config);

struct F1Scores {
  /// F1 of the transferable class.
  double f1 = 0.0;
  double macro_f1 = 0.0;
};

F1Scores f1_macro_f1(std::span<const int> gold, std::span<const int> pred);

/// Rank-statistic ROC AUC with ties counted half. Throws when gold holds a
/// single class.
double auc(std::span<const int> gold, std::span<const double> scores);

/// Ordered key -> value table. NaN marks an undefined entry.
using Report = std::vector<std::pair<std::string, double>>;

/// F1, MacroF1, AUC, GT-I, GT-II, GT-III at the given lambda. AUC is NaN when
/// the gold labels hold a single class.
Report evaluate_predictions(const Corpus& gold, std::span<const SessionPrediction> preds, double lambda = 0.0);

std::string report_to_json(const Report& report);
std::string report_to_table(const Report& report);

/// Reads `{"session_id", "probs", "labels"}` lines.
std::vector<SessionPrediction> read_predictions(const std::filesystem::path& path);
std::vector<SessionPrediction> read_predictions(std::istream& in, std::string_view source_name = "<stream>");
void write_predictions(std::span<const SessionPrediction> preds, const std::filesystem::path& path);
void write_predictions(std::span<const SessionPrediction> preds, std::ostream& out);

/// Default lambda grid for sweeps.
const std::vector<double>& default_lambda_grid();

}  // namespace dami
