#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "dami/checkpoint.hpp"
#include "dami/corpus.hpp"
#include "dami/featurize.hpp"
#include "dami/metrics.hpp"
#include "dami/model.hpp"

namespace dami {

enum class SelectionMetric : std::uint8_t { kMacroF1, kGtII };

std::string_view to_string(SelectionMetric metric);
SelectionMetric parse_selection_metric(std::string_view text);

struct TrainConfig {
  double learning_rate = 0.0075;
  int batch_size = 128;
  int epochs = 30;
  /// L2 weight delta; the objective adds (delta / 2) * ||theta||^2.
  double l2 = 1e-4;
  std::uint64_t seed = 0;
  SelectionMetric selection = SelectionMetric::kMacroF1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  /// Global-norm gradient clipping; 0 disables.
  double clip_norm = 5.0;
  /// Worker threads for per-batch gradients; 0 picks the hardware count.
  int threads = 0;

  void validate() const;
};

/// Gold corpus plus its featurized form, parallel by index.
struct Dataset {
  Corpus gold;
  std::vector<FeaturizedDialogue> features;

  std::size_t size() const { return features.size(); }
};

/// Labels padded to the longest dialogue in the batch; mask marks real
/// utterances.
struct PaddedBatch {
  std::vector<const FeaturizedDialogue*> dialogues;
  Eigen::MatrixXi labels;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask;
  int max_tokens = 0;

  int size() const { return static_cast<int>(dialogues.size()); }
};

PaddedBatch make_batch(std::span<const FeaturizedDialogue* const> dialogues);

struct LossTerms {
  /// Data term plus L2 term.
  double total = 0.0;
  /// -(1/I) sum_i sum_t log p_{i,t}(y_{i,t}) over unmasked utterances.
  double cross_entropy = 0.0;
  double l2 = 0.0;
};

struct LossOptions {
  double l2 = 0.0;
  /// Dropout is active only when `train` is set.
  bool train = false;
  std::uint64_t dropout_seed = 0;
  int threads = 1;
};

/// Batch objective; accumulates its gradient into `grad` (which is
/// overwritten) when given.
LossTerms batch_loss(const PaddedBatch& batch, const ModelParams& params, const ModelConfig& config,
                     const LossOptions& options, ModelParams* grad = nullptr);

/// Objective over a whole dataset with dropout off.
LossTerms dataset_loss(const Dataset& data, const ModelParams& params, const ModelConfig& config, double l2);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  Report valid;
  double selection_score = 0.0;
};

struct TrainState {
  ModelParams params;
  ModelParams adam_m;
  ModelParams adam_v;
  long long step = 0;
  int epoch = 0;
  double best_score = -1.0;
  int best_epoch = 0;
  ModelParams best_params;
  std::vector<EpochRecord> history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Adam with per-epoch seeded shuffling; keeps the snapshot with the best
/// validation selection metric.
TrainState train(const Dataset& train_set, const Dataset& valid_set, const ModelConfig& model_config,
                 const TrainConfig& train_config, const EpochCallback& on_epoch = {},
                 std::optional<ModelParams> initial = std::nullopt);

std::vector<SessionPrediction> predict(const Dataset& data, const ModelParams& params, const ModelConfig& config,
                                       std::optional<double> threshold = std::nullopt, int threads = 1);

/// F1, MacroF1, AUC, GT-I, GT-II, GT-III on `data` at `lambda`.
Report evaluate(const Dataset& data, const ModelParams& params, const ModelConfig& config, double lambda = 0.0,
                std::optional<double> threshold = std::nullopt);

/// One report per lambda.
std::vector<std::pair<double, Report>> lambda_sweep(const Corpus& gold, std::span<const SessionPrediction> preds,
                                                    std::span<const double> lambdas);

std::string epoch_record_json(const EpochRecord& record);

// ---------------------------------------------------------------------------
// Data preparation and experiment helpers

struct PreparedData {
  CorpusSplits splits;
  std::shared_ptr<const Featurizer> featurizer;
  Dataset train;
  Dataset valid;
  Dataset test;
};

struct PrepareOptions {
  SplitSpec split;
  int min_count = 1;
  std::shared_ptr<const Tagger> tagger;
  std::shared_ptr<const EmotionScorer> scorer;
};

/// Splits, builds vocabulary and frequencies on the training part, and
/// featurizes all three parts. Defaults to the synthetic tagger and the
/// built-in lexicon scorer.
PreparedData prepare_data(const Corpus& corpus, const PrepareOptions& options);

Dataset make_dataset(const Corpus& gold, const Featurizer& featurizer);

/// Fills vocab_size and pos_tags from the featurizer.
ModelConfig bind_model_config(ModelConfig config, const Featurizer& featurizer);

enum class Variant : std::uint8_t { kFull, kNoEmotion, kNoMatching, kNoDifficulty, kPlainAttention };

std::string_view to_string(Variant variant);
Variant parse_variant(std::string_view text);
const std::vector<Variant>& all_variants();

/// Single-component change to the base configuration.
ModelConfig apply_variant(ModelConfig base, Variant variant);

struct VariantResult {
  Variant variant;
  ModelConfig config;
  TrainState state;
  Report test_report;
};

/// Trains and evaluates each variant on the same data with the same seeds.
std::vector<VariantResult> ablate(const PreparedData& data, const ModelConfig& base, const TrainConfig& train_config,
                                  std::span<const Variant> variants, double lambda = 0.0,
                                  const std::function<void(Variant, const EpochRecord&)>& on_epoch = {});

double report_value(const Report& report, std::string_view key);

}  // namespace dami
