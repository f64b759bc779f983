#include <benchmark/benchmark.h>

#include <map>

#include "dami/metrics.hpp"
#include "dami/synthetic.hpp"
#include "dami/training.hpp"

using namespace dami;

namespace {

struct Fixture {
  PreparedData data;
  ModelConfig config;
  ModelParams params;
};

const Fixture& fixture(int hidden) {
  static std::map<int, Fixture> cache;
  auto it = cache.find(hidden);
  if (it != cache.end()) return it->second;
  SyntheticOptions opt;
  opt.n_dialogues = 300;
  opt.seed = 1;
  PrepareOptions po;
  po.split.seed = 1;
  Fixture f;
  f.data = prepare_data(generate_synthetic(opt).corpus, po);
  ModelConfig c;
  c.hidden = hidden;
  c.word_dim = hidden;
  c.attention = hidden;
  c.max_dialogue_length = opt.max_utterances;
  f.config = bind_model_config(c, *f.data.featurizer);
  f.params = init_params(f.config, 1);
  return cache.emplace(hidden, std::move(f)).first->second;
}

void BM_DialogueForward(benchmark::State& state) {
  const auto& f = fixture(static_cast<int>(state.range(0)));
  const auto& d = f.data.train.features.front();
  for (auto _ : state) benchmark::DoNotOptimize(forward_dialogue(d.utterances, f.params, f.config));
  state.SetItemsProcessed(state.iterations() * static_cast<long long>(d.length()));
}
BENCHMARK(BM_DialogueForward)->Arg(32)->Arg(64)->Arg(128);

void BM_DialogueLossAndGradient(benchmark::State& state) {
  const auto& f = fixture(static_cast<int>(state.range(0)));
  const auto& d = f.data.train.features.front();
  ModelParams grad = ModelParams::zeros(f.config);
  for (auto _ : state) benchmark::DoNotOptimize(dialogue_loss(d, f.params, f.config, &grad));
  state.SetItemsProcessed(state.iterations() * static_cast<long long>(d.length()));
}
BENCHMARK(BM_DialogueLossAndGradient)->Arg(32)->Arg(64)->Arg(128);

void BM_BatchLoss(benchmark::State& state) {
  const auto& f = fixture(64);
  std::vector<const FeaturizedDialogue*> batch;
  for (std::size_t i = 0; i < 128 && i < f.data.train.size(); ++i) batch.push_back(&f.data.train.features[i]);
  const auto b = make_batch(batch);
  LossOptions lo;
  lo.train = true;
  lo.threads = static_cast<int>(state.range(0));
  ModelParams grad;
  for (auto _ : state) benchmark::DoNotOptimize(batch_loss(b, f.params, f.config, lo, &grad));
  state.SetItemsProcessed(state.iterations() * b.size());
}
BENCHMARK(BM_BatchLoss)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);

std::pair<Corpus, std::vector<SessionPrediction>> random_sessions(int n) {
  Rng rng(3);
  Corpus gold;
  std::vector<SessionPrediction> preds;
  for (int i = 0; i < n; ++i) {
    Dialogue d{"s" + std::to_string(i), {}};
    SessionPrediction p{d.session_id, {}, {}};
    for (int t = 0; t < 12; ++t) {
      d.utterances.push_back({Role::kCustomer, "x", rng.bernoulli(0.1) ? Label::kTransferable : Label::kNormal});
      p.probs.push_back(rng.uniform());
      p.labels.push_back(p.probs.back() > 0.8);
    }
    gold.dialogues.push_back(std::move(d));
    preds.push_back(std::move(p));
  }
  return {std::move(gold), std::move(preds)};
}

void BM_EvaluatePredictions(benchmark::State& state) {
  const auto [gold, preds] = random_sessions(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_predictions(gold, preds));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_EvaluatePredictions)->Arg(1000)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
