#include "dami/training.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>

#include "dami/error.hpp"
#include "dami/rng.hpp"
#include "dami/synthetic.hpp"
#include "json.hpp"

namespace dami {

namespace {

// Fixed reduction layout so results do not depend on the thread count.
constexpr int kGradientChunks = 8;

ModelParams zeros_like(const ModelParams& p) {
  ModelParams out = p;
  out.set_zero();
  return out;
}

std::vector<double*> tensor_data(ModelParams& p) {
  std::vector<double*> out;
  p.visit([&](std::string_view, Eigen::Index, Eigen::Index, double* data) { out.push_back(data); });
  return out;
}

std::vector<Eigen::Index> tensor_sizes(const ModelParams& p) {
  std::vector<Eigen::Index> out;
  p.visit([&](std::string_view, Eigen::Index rows, Eigen::Index cols, const double*) { out.push_back(rows * cols); });
  return out;
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace

std::string_view to_string(SelectionMetric metric) { return metric == SelectionMetric::kGtII ? "gt_ii" : "macro_f1"; }

SelectionMetric parse_selection_metric(std::string_view text) {
  if (text == "macro_f1") return SelectionMetric::kMacroF1;
  if (text == "gt_ii") return SelectionMetric::kGtII;
  throw Error("unknown selection metric \"" + std::string(text) + "\" (expected macro_f1 or gt_ii)");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error("learning_rate must be > 0");
  if (batch_size < 1) throw Error("batch_size must be >= 1");
  if (epochs < 1) throw Error("epochs must be >= 1");
  if (!(l2 >= 0.0)) throw Error("l2 must be >= 0");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) throw Error("Adam betas must lie in (0, 1)");
  if (!(adam_epsilon > 0.0)) throw Error("adam_epsilon must be > 0");
  if (!(clip_norm >= 0.0)) throw Error("clip_norm must be >= 0");
}

PaddedBatch make_batch(std::span<const FeaturizedDialogue* const> dialogues) {
  if (dialogues.empty()) throw Error("empty batch");
  PaddedBatch b;
  b.dialogues.assign(dialogues.begin(), dialogues.end());
  std::size_t max_len = 0;
  for (const auto* d : dialogues) {
    max_len = std::max(max_len, d->length());
    for (const auto& u : d->utterances) b.max_tokens = std::max(b.max_tokens, static_cast<int>(u.length()));
  }
  const auto rows = static_cast<Eigen::Index>(dialogues.size());
  const auto cols = static_cast<Eigen::Index>(max_len);
  b.labels = Eigen::MatrixXi::Constant(rows, cols, -1);
  b.mask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(rows, cols, false);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& d = *dialogues[static_cast<std::size_t>(i)];
    if (d.labels.size() != d.length()) throw Error("session " + d.session_id + ": label count differs from utterance count");
    for (std::size_t t = 0; t < d.length(); ++t) {
      b.labels(i, static_cast<Eigen::Index>(t)) = d.labels[t];
      b.mask(i, static_cast<Eigen::Index>(t)) = true;
    }
  }
  return b;
}

LossTerms batch_loss(const PaddedBatch& batch, const ModelParams& params, const ModelConfig& config,
                     const LossOptions& options, ModelParams* grad) {
  const int n = batch.size();
  if (n == 0) throw Error("empty batch");
  const int chunks = std::min(kGradientChunks, n);
  std::vector<double> chunk_loss(static_cast<std::size_t>(chunks), 0.0);
  std::vector<ModelParams> chunk_grad;
  if (grad != nullptr) chunk_grad.assign(static_cast<std::size_t>(chunks), zeros_like(params));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(chunks));

  auto run_chunk = [&](int c) {
    try {
      const int lo = c * n / chunks;
      const int hi = (c + 1) * n / chunks;
      for (int i = lo; i < hi; ++i) {
        const auto& d = *batch.dialogues[static_cast<std::size_t>(i)];
        // Only the unmasked prefix of each padded row carries labels.
        const auto real = static_cast<std::size_t>(batch.mask.row(i).count());
        if (real != d.length()) throw Error("session " + d.session_id + ": mask disagrees with dialogue length");
        Rng rng = Rng::derive(options.dropout_seed, static_cast<std::uint64_t>(i));
        ForwardOptions fo;
        fo.train = options.train;
        fo.rng = &rng;
        chunk_loss[static_cast<std::size_t>(c)] +=
            dialogue_loss(d, params, config, grad ? &chunk_grad[static_cast<std::size_t>(c)] : nullptr, fo);
      }
    } catch (...) {
      errors[static_cast<std::size_t>(c)] = std::current_exception();
    }
  };

  const int threads = std::min(resolve_threads(options.threads), chunks);
  if (threads <= 1) {
    for (int c = 0; c < chunks; ++c) run_chunk(c);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        for (int c = w; c < chunks; c += threads) run_chunk(c);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  LossTerms out;
  for (double l : chunk_loss) out.cross_entropy += l;
  out.cross_entropy /= n;
  out.l2 = 0.5 * options.l2 * params.squared_norm();
  out.total = out.cross_entropy + out.l2;

  if (grad != nullptr) {
    *grad = std::move(chunk_grad[0]);
    for (int c = 1; c < chunks; ++c) grad->add_scaled(chunk_grad[static_cast<std::size_t>(c)], 1.0);
    auto g = tensor_data(*grad);
    const auto sizes = tensor_sizes(*grad);
    std::vector<const double*> p;
    params.visit([&](std::string_view, Eigen::Index, Eigen::Index, const double* data) { p.push_back(data); });
    for (std::size_t t = 0; t < g.size(); ++t) {
      Eigen::Map<Eigen::VectorXd> gt(g[t], sizes[t]);
      gt = gt / n + options.l2 * Eigen::Map<const Eigen::VectorXd>(p[t], sizes[t]);
    }
  }
  return out;
}

LossTerms dataset_loss(const Dataset& data, const ModelParams& params, const ModelConfig& config, double l2) {
  std::vector<const FeaturizedDialogue*> all;
  for (const auto& d : data.features) all.push_back(&d);
  LossOptions opt;
  opt.l2 = l2;
  return batch_loss(make_batch(all), params, config, opt);
}

// ---------------------------------------------------------------------------

std::vector<SessionPrediction> predict(const Dataset& data, const ModelParams& params, const ModelConfig& config,
                                       std::optional<double> threshold, int threads) {
  std::vector<SessionPrediction> out(data.features.size());
  auto run = [&](std::size_t i) {
    const auto& d = data.features[i];
    const auto res = forward_dialogue(d.utterances, params, config);
    auto& p = out[i];
    p.session_id = d.session_id;
    p.probs.reserve(res.probs.size());
    for (const auto& pr : res.probs) p.probs.push_back(pr(1));
    p.labels = hard_labels(p.probs, threshold);
  };
  const int workers = std::min<int>(resolve_threads(threads), static_cast<int>(out.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < out.size(); ++i) run(i);
    return out;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = static_cast<std::size_t>(w); i < out.size(); i += static_cast<std::size_t>(workers)) run(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

Report evaluate(const Dataset& data, const ModelParams& params, const ModelConfig& config, double lambda,
                std::optional<double> threshold) {
  const auto preds = predict(data, params, config, threshold);
  return evaluate_predictions(data.gold, preds, lambda);
}

std::vector<std::pair<double, Report>> lambda_sweep(const Corpus& gold, std::span<const SessionPrediction> preds,
                                                    std::span<const double> lambdas) {
  std::vector<std::pair<double, Report>> out;
  for (double l : lambdas) out.emplace_back(l, evaluate_predictions(gold, preds, l));
  return out;
}

double report_value(const Report& report, std::string_view key) {
  for (const auto& [k, v] : report) {
    if (k == key) return v;
  }
  throw Error("report has no entry \"" + std::string(key) + "\"");
}

std::string epoch_record_json(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["train_loss"] = r.train_loss;
  nlohmann::ordered_json valid = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.valid) {
    if (std::isnan(v)) {
      valid[k] = nullptr;
    } else {
      valid[k] = v;
    }
  }
  j["valid"] = std::move(valid);
  return j.dump();
}

TrainState train(const Dataset& train_set, const Dataset& valid_set, const ModelConfig& config, const TrainConfig& tc,
                 const EpochCallback& on_epoch, std::optional<ModelParams> initial) {
  tc.validate();
  config.validate();
  if (train_set.features.empty()) throw Error("training split is empty");
  if (valid_set.features.empty()) throw Error("validation split is empty");

  TrainState st;
  st.params = initial ? std::move(*initial) : init_params(config, tc.seed);
  st.adam_m = zeros_like(st.params);
  st.adam_v = zeros_like(st.params);
  st.best_params = st.params;

  auto p = tensor_data(st.params);
  auto m = tensor_data(st.adam_m);
  auto v = tensor_data(st.adam_v);
  const auto sizes = tensor_sizes(st.params);
  const int threads = resolve_threads(tc.threads);

  const std::size_t n = train_set.features.size();
  std::vector<std::size_t> order(n);
  ModelParams grad;
  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng shuffle_rng = Rng::derive(tc.seed, 0x5348554646ULL, static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);

    double weighted_loss = 0.0;
    int batch_index = 0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(tc.batch_size), ++batch_index) {
      const std::size_t end = std::min(n, start + static_cast<std::size_t>(tc.batch_size));
      std::vector<const FeaturizedDialogue*> members;
      for (std::size_t i = start; i < end; ++i) members.push_back(&train_set.features[order[i]]);
      const auto batch = make_batch(members);

      LossOptions lo;
      lo.l2 = tc.l2;
      lo.train = true;
      lo.dropout_seed = Rng::derive(tc.seed, 0xD209ULL, static_cast<std::uint64_t>(st.step)).next();
      lo.threads = threads;
      LossTerms loss;
      try {
        loss = batch_loss(batch, st.params, config, lo, &grad);
      } catch (const Error& e) {
        throw Error("epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index) + ": " + e.what());
      }
      if (!std::isfinite(loss.total) || !grad.all_finite()) {
        throw Error("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index));
      }
      weighted_loss += loss.total * static_cast<double>(end - start);

      if (tc.clip_norm > 0.0) {
        const double norm = std::sqrt(grad.squared_norm());
        if (norm > tc.clip_norm) grad.add_scaled(grad, tc.clip_norm / norm - 1.0);
      }

      ++st.step;
      const double bc1 = 1.0 - std::pow(tc.beta1, static_cast<double>(st.step));
      const double bc2 = 1.0 - std::pow(tc.beta2, static_cast<double>(st.step));
      const auto g = tensor_data(grad);
      for (std::size_t t = 0; t < p.size(); ++t) {
        for (Eigen::Index i = 0; i < sizes[t]; ++i) {
          const double gi = g[t][i];
          m[t][i] = tc.beta1 * m[t][i] + (1.0 - tc.beta1) * gi;
          v[t][i] = tc.beta2 * v[t][i] + (1.0 - tc.beta2) * gi * gi;
          p[t][i] -= tc.learning_rate * (m[t][i] / bc1) / (std::sqrt(v[t][i] / bc2) + tc.adam_epsilon);
        }
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = weighted_loss / static_cast<double>(n);
    rec.valid = evaluate_predictions(valid_set.gold, predict(valid_set, st.params, config, std::nullopt, threads));
    rec.selection_score = report_value(rec.valid, tc.selection == SelectionMetric::kGtII ? "GT-II" : "MacroF1");
    if (epoch == 1 || rec.selection_score > st.best_score) {
      st.best_score = rec.selection_score;
      st.best_epoch = epoch;
      st.best_params = st.params;
    }
    st.epoch = epoch;
    st.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return st;
}

// ---------------------------------------------------------------------------

Dataset make_dataset(const Corpus& gold, const Featurizer& featurizer) {
  Dataset d;
  d.gold = gold;
  d.features = featurizer.corpus(gold);
  return d;
}

PreparedData prepare_data(const Corpus& corpus, const PrepareOptions& options) {
  auto tagger = options.tagger ? options.tagger : std::make_shared<const SyntheticTagger>();
  auto scorer = options.scorer ? options.scorer : std::make_shared<const LexiconScorer>();
  PreparedData out;
  out.splits = split(corpus, options.split);
  const Tokenizer tokenize = [tagger](std::string_view text) { return tagger->tokenize(text); };
  const Corpus with_vocab = build_vocabulary(out.splits.train, options.min_count, tokenize);
  auto freq = build_frequency_table(with_vocab, tokenize);
  auto tagset = corpus.pos_tagset.empty() ? synthetic_tagset() : corpus.pos_tagset;
  out.featurizer = std::make_shared<const Featurizer>(with_vocab.vocabulary, std::move(tagset), std::move(freq),
                                                      std::move(tagger), std::move(scorer));
  for (Corpus* part : {&out.splits.train, &out.splits.valid, &out.splits.test}) {
    part->vocabulary = with_vocab.vocabulary;
    part->pos_tagset = out.featurizer->tagset();
  }
  out.train = make_dataset(out.splits.train, *out.featurizer);
  out.valid = make_dataset(out.splits.valid, *out.featurizer);
  out.test = make_dataset(out.splits.test, *out.featurizer);
  return out;
}

ModelConfig bind_model_config(ModelConfig config, const Featurizer& featurizer) {
  config.vocab_size = featurizer.vocabulary().size();
  config.pos_tags = static_cast<int>(featurizer.tagset().size());
  return config;
}

std::string_view to_string(Variant variant) {
  switch (variant) {
    case Variant::kFull: return "full";
    case Variant::kNoEmotion: return "no_emotion";
    case Variant::kNoMatching: return "no_matching";
    case Variant::kNoDifficulty: return "no_difficulty";
    case Variant::kPlainAttention: return "plain_attention";
  }
  return "unknown";
}

Variant parse_variant(std::string_view text) {
  for (Variant v : all_variants()) {
    if (to_string(v) == text) return v;
  }
  throw Error("unknown variant \"" + std::string(text) +
              "\" (expected full, no_emotion, no_matching, no_difficulty or plain_attention)");
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v = {Variant::kFull, Variant::kNoEmotion, Variant::kNoMatching,
                                         Variant::kNoDifficulty, Variant::kPlainAttention};
  return v;
}

ModelConfig apply_variant(ModelConfig base, Variant variant) {
  switch (variant) {
    case Variant::kFull: break;
    case Variant::kNoEmotion: base.use_emotion = false; break;
    case Variant::kNoMatching: base.use_matching = false; break;
    case Variant::kNoDifficulty: base.encoder_mode = EncoderMode::kPlainBiRnn; break;
    case Variant::kPlainAttention: base.encoder_mode = EncoderMode::kBiRnnSelfAttention; break;
  }
  return base;
}

std::vector<VariantResult> ablate(const PreparedData& data, const ModelConfig& base, const TrainConfig& tc,
                                  std::span<const Variant> variants, double lambda,
                                  const std::function<void(Variant, const EpochRecord&)>& on_epoch) {
  std::vector<VariantResult> out;
  for (Variant v : variants) {
    VariantResult r;
    r.variant = v;
    r.config = apply_variant(bind_model_config(base, *data.featurizer), v);
    EpochCallback cb;
    if (on_epoch) cb = [&](const EpochRecord& rec) { on_epoch(v, rec); };
    r.state = train(data.train, data.valid, r.config, tc, cb);
    r.test_report = evaluate(data.test, r.state.best_params, r.config, lambda);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace dami
