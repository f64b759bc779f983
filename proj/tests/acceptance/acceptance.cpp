// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance            run all criteria
//   acceptance 1 5 9      run a subset

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dami/synthetic.hpp"
#include "dami/training.hpp"
#include "test_support.hpp"

using namespace dami;
namespace t = dami::testing;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string title;
  double budget_seconds;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

GttConfig gtt(int tolerance, double lambda = 0.0) {
  GttConfig c;
  c.tolerance = tolerance;
  c.lambda = lambda;
  return c;
}

// 1 -------------------------------------------------------------------------
Outcome worked_example() {
  const Report r = evaluate_predictions(t::worked_gold(), t::worked_pred(), 0.0);
  const double g1 = report_value(r, "GT-I");
  const double g2 = report_value(r, "GT-II");
  const double g3 = report_value(r, "GT-III");
  const bool ok = std::abs(g1 - 0.6065) <= 0.005 && std::abs(g2 - 0.8825) <= 0.005 && std::abs(g3 - 0.9460) <= 0.005;
  return {ok, "GT-I " + fmt("%.4f", g1) + ", GT-II " + fmt("%.4f", g2) + ", GT-III " + fmt("%.4f", g3)};
}

// 2 -------------------------------------------------------------------------
Outcome piecewise() {
  int bad = 0;
  int cases = 0;
  const std::vector<int> none;
  for (int tol : {1, 2, 3}) {
    for (double l : {-0.9, 0.0, 0.9}) {
      const auto c = gtt(tol, l);
      auto check = [&](double got, double want) {
        ++cases;
        if (got != want) ++bad;
      };
      check(gtt_session(none, none, c, 6), 1.0);
      check(gtt_session(none, std::vector<int>{2}, c, 6), 0.0);
      check(gtt_session(std::vector<int>{2}, none, c, 6), 0.0);
      check(gtt_session(std::vector<int>{2}, std::vector<int>{2}, c, 6), 1.0);
      check(gtt_session(std::vector<int>{1, 4}, std::vector<int>{1, 4}, c, 6), 1.0);
    }
  }
  return {bad == 0, std::to_string(cases) + " cases, " + std::to_string(bad) + " mismatches"};
}

// 3 -------------------------------------------------------------------------
Outcome property_suite() {
  Rng rng(2024);
  int violations = 0;
  auto positions = [&](int length) {
    std::vector<int> out;
    for (int i = 0; i < length; ++i) {
      if (rng.bernoulli(0.3)) out.push_back(i);
    }
    return out;
  };
  for (int i = 0; i < 1000; ++i) {
    const int length = 2 + static_cast<int>(rng.below(30));
    const int q = static_cast<int>(rng.below(static_cast<std::size_t>(length)));
    int p = static_cast<int>(rng.below(static_cast<std::size_t>(length)));
    if (p == q) p = (q + 1) % length;
    const int delta = p - q;
    const int tol = 1 + static_cast<int>(rng.below(3));
    double l1 = rng.uniform(-0.95, 0.95);
    double l2 = rng.uniform(-0.95, 0.95);
    if (l1 > l2) std::swap(l1, l2);
    if (l2 - l1 < 1e-3) l2 = std::min(0.95, l1 + 0.01);
    const std::vector<int> gold{q};
    const std::vector<int> pred{p};
    const double s1 = gtt_session(gold, pred, gtt(tol, l1), length);
    const double s2 = gtt_session(gold, pred, gtt(tol, l2), length);
    if (delta > 0 && !(s2 < s1)) ++violations;
    if (delta < 0 && !(s2 > s1)) ++violations;
    if (!(gtt_session(gold, pred, gtt(tol + 1), length) > gtt_session(gold, pred, gtt(tol), length))) ++violations;
    const int mirror = q - delta;
    if (mirror >= 0 && mirror < length &&
        gtt_session(gold, pred, gtt(tol), length) != gtt_session(gold, std::vector<int>{mirror}, gtt(tol), length)) {
      ++violations;
    }
    const double any = gtt_session(positions(length), positions(length), gtt(tol, l1), length);
    if (!(any >= 0.0 && any <= 1.0)) ++violations;
  }
  return {violations == 0, "1000 sessions, " + std::to_string(violations) + " violations"};
}

// 4 -------------------------------------------------------------------------
Outcome classification_oracles() {
  Rng rng(8);
  double worst = 0.0;
  for (int i = 0; i < 500; ++i) {
    std::size_t n = 2 + rng.below(200);
    std::vector<int> g(n), p(n);
    std::vector<double> s(n);
    const double rate = rng.uniform(0.05, 0.95);
    for (std::size_t j = 0; j < n; ++j) {
      g[j] = rng.bernoulli(rate);
      p[j] = rng.bernoulli(rate);
      s[j] = rng.bernoulli(0.5) ? static_cast<double>(rng.below(5)) / 4.0 : rng.uniform();
    }
    g[0] = 0;
    g[1] = 1;
    const auto f = f1_macro_f1(g, p);
    const double f1 = t::oracle_f1_of(g, p, 1);
    worst = std::max(worst, std::abs(f.f1 - f1));
    worst = std::max(worst, std::abs(f.macro_f1 - 0.5 * (f1 + t::oracle_f1_of(g, p, 0))));
    worst = std::max(worst, std::abs(auc(g, s) - t::pairwise_auc(g, s)));
  }
  const Report worked = evaluate_predictions(t::worked_gold(), t::worked_pred());
  const double f1 = report_value(worked, "F1");
  const double mf1 = report_value(worked, "MacroF1");
  const double a = report_value(worked, "AUC");
  const bool worked_ok = f1 == 0.0 && std::abs(mf1 - 0.4) < 1e-9 && std::abs(a - 0.4) < 1e-9;
  return {worst <= 1e-9 && worked_ok, "500 vectors, max diff " + fmt("%.2e", worst) + "; worked session F1 " + fmt("%.3f", f1) +
                                      ", MacroF1 " + fmt("%.3f", mf1) + ", AUC " + fmt("%.3f", a)};
}

// 5 -------------------------------------------------------------------------
Outcome gradient_check() {
  Rng rng(27);
  const ModelConfig c = t::tiny_config(4, 8, 4, 5, 12, 4);
  const auto p = t::noisy_params(c, 28);
  std::vector<FeaturizedDialogue> ds = {t::random_dialogue(rng, c, 3, "a"), t::random_dialogue(rng, c, 3, "b")};
  ds[0].labels = {0, 1, 0};
  ds[1].labels = {1, 0, 1};
  const auto res = t::gradient_check(ds, p, c);
  std::string worst_name;
  double worst = 0.0;
  for (const auto& [name, rel] : res.groups) {
    if (rel >= worst) {
      worst = rel;
      worst_name = name;
    }
  }
  return {res.max_rel < 1e-4, std::to_string(res.groups.size()) + " groups, " + std::to_string(res.entries) +
                                  " entries, max rel err " + fmt("%.2e", worst) + " (" + worst_name + ")"};
}

// 6 -------------------------------------------------------------------------
Outcome structural() {
  Rng rng(13);
  const ModelConfig c = t::tiny_config(4, 8, 4, 5, 12, 10);
  const auto p = t::noisy_params(c, 14);
  int failures = 0;
  double worst_sum = 0.0;
  double worst_causal = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const int L = 2 + static_cast<int>(rng.below(9));
    auto d = t::random_dialogue(rng, c, L);
    const auto before = forward_dialogue(d.utterances, p, c);
    for (const auto& e : before.encodings) {
      if (e.vector.size() != 4 * c.hidden + 1) ++failures;
      worst_sum = std::max(worst_sum, std::abs(e.token_attention.sum() - 1.0));
    }
    for (Eigen::Index i = 0; i < before.matching.rows(); ++i) {
      for (Eigen::Index j = i; j < before.matching.cols(); ++j) {
        if (before.matching(i, j) != 0.0) ++failures;
      }
    }
    for (std::size_t s = 1; s < before.context_attention.size(); ++s) {
      worst_sum = std::max(worst_sum, std::abs(before.context_attention[s].sum() - 1.0));
    }
    for (const auto& pr : before.probs) worst_sum = std::max(worst_sum, std::abs(pr.sum() - 1.0));

    const auto tt = rng.below(static_cast<std::size_t>(L - 1));
    d.utterances[tt + 1] = t::random_utterance(rng, c, static_cast<int>(rng.below(2)), 6);
    const auto after = forward_dialogue(d.utterances, p, c);
    for (std::size_t s = 0; s <= tt; ++s) {
      worst_causal = std::max(worst_causal, (before.probs[s] - after.probs[s]).cwiseAbs().maxCoeff());
    }
  }
  const bool ok = failures == 0 && worst_sum <= 1e-6 && worst_causal <= 1e-7;
  return {ok, "100 dialogues, " + std::to_string(failures) + " shape/triangularity failures, max softmax dev " +
                  fmt("%.1e", worst_sum) + ", max causal change " + fmt("%.1e", worst_causal)};
}

// Featurizer built on the whole corpus, for runs that train on everything.
std::shared_ptr<const Featurizer> whole_corpus_featurizer(const Corpus& corpus) {
  auto tagger = std::make_shared<const SyntheticTagger>();
  const Tokenizer tokenize = [tagger](std::string_view text) { return tagger->tokenize(text); };
  const Corpus with_vocab = build_vocabulary(corpus, 1, tokenize);
  return std::make_shared<const Featurizer>(with_vocab.vocabulary, synthetic_tagset(),
                                            build_frequency_table(with_vocab, tokenize), tagger,
                                            std::make_shared<const LexiconScorer>());
}

// 7 -------------------------------------------------------------------------
Outcome overfit() {
  SyntheticOptions opt;
  opt.n_dialogues = 10;
  opt.seed = 7;
  const Corpus corpus = generate_synthetic(opt).corpus;
  const auto featurizer = whole_corpus_featurizer(corpus);
  const Dataset data = make_dataset(corpus, *featurizer);

  ModelConfig base;
  base.hidden = 32;
  base.word_dim = 32;
  base.attention = 32;
  base.max_dialogue_length = opt.max_utterances;
  base.dropout = 0.0;
  const ModelConfig mc = bind_model_config(base, *featurizer);
  TrainConfig tc;
  tc.epochs = 200;
  tc.l2 = 0.0;
  tc.seed = 1;
  tc.threads = 0;
  const auto state = train(data, data, mc, tc);

  const double loss = dataset_loss(data, state.params, mc, 0.0).total;
  const double g3 = report_value(evaluate(data, state.params, mc), "GT-III");
  return {loss < 0.01 && g3 == 1.0, "final train loss " + fmt("%.2e", loss) + ", train GT-III " + fmt("%.4f", g3)};
}

// 8 -------------------------------------------------------------------------
Outcome end_to_end() {
  SyntheticOptions opt;
  opt.n_dialogues = 2000;
  opt.seed = 2000;
  opt.rates.explicit_demand = 0.0;
  opt.rates.unsatisfactory_answer = 0.0;
  opt.rates.negative_emotion = 0.3;
  opt.rates.repeated_utterance = 0.4;
  opt.normal_fraction = 0.08;
  PrepareOptions po;
  po.split = {0.8, 0.1, 0.1, 2000};
  const PreparedData pd = prepare_data(generate_synthetic(opt).corpus, po);

  ModelConfig base;
  base.hidden = 64;
  base.word_dim = 64;
  base.attention = 64;
  base.max_dialogue_length = opt.max_utterances;

  const std::vector<Variant> variants = {Variant::kFull, Variant::kNoMatching};
  double full_gt2 = 0.0;
  double ablated_gt2 = 0.0;
  bool every_gt3 = true;
  std::ostringstream per_seed;
  for (std::uint64_t seed : {1, 2, 3}) {
    TrainConfig tc;
    tc.seed = seed;
    tc.threads = 0;
    const auto res = ablate(pd, base, tc, variants, 0.0, [&](Variant v, const EpochRecord& r) {
      std::cerr << "  [8] seed " << seed << ' ' << to_string(v) << " epoch " << r.epoch << " loss " << r.train_loss
                << '\n';
    });
    const double f2 = report_value(res[0].test_report, "GT-II");
    const double f3 = report_value(res[0].test_report, "GT-III");
    const double n2 = report_value(res[1].test_report, "GT-II");
    full_gt2 += f2 / 3.0;
    ablated_gt2 += n2 / 3.0;
    every_gt3 = every_gt3 && f3 >= 0.80;
    per_seed << "; seed " << seed << ": full GT-II " << fmt("%.4f", f2) << " GT-III " << fmt("%.4f", f3)
             << ", no_matching GT-II " << fmt("%.4f", n2);
  }
  return {every_gt3 && full_gt2 > ablated_gt2, "mean GT-II full " + fmt("%.4f", full_gt2) + " vs no_matching " +
                                                   fmt("%.4f", ablated_gt2) + per_seed.str()};
}

// 9 -------------------------------------------------------------------------
Outcome determinism() {
  SyntheticOptions opt;
  opt.n_dialogues = 200;
  opt.seed = 9;
  auto serialize = [](const Corpus& c) {
    std::ostringstream out;
    write_jsonl(c, out);
    return out.str();
  };
  const auto a = generate_synthetic(opt).corpus;
  const auto b = generate_synthetic(opt).corpus;
  const bool corpora = serialize(a) == serialize(b);

  const SplitSpec spec{0.8, 0.1, 0.1, 9};
  const auto sa = split(a, spec);
  const auto sb = split(b, spec);
  const bool splits = serialize(sa.train) == serialize(sb.train) && serialize(sa.valid) == serialize(sb.valid) &&
                      serialize(sa.test) == serialize(sb.test);

  PrepareOptions po;
  po.split = spec;
  const auto pd = prepare_data(a, po);
  ModelConfig base = t::tiny_config(16, 16, 10, 16, 2, opt.max_utterances);
  base.dropout = 0.25;
  const ModelConfig mc = bind_model_config(base, *pd.featurizer);
  auto flat = [](const ModelParams& p) {
    std::vector<double> out;
    p.visit([&](std::string_view, Eigen::Index r, Eigen::Index c, const double* d) { out.insert(out.end(), d, d + r * c); });
    return out;
  };
  const bool init = flat(init_params(mc, 5)) == flat(init_params(mc, 5));

  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 32;
  tc.seed = 5;
  tc.threads = 1;
  const double l1 = train(pd.train, pd.valid, mc, tc).history[0].train_loss;
  const double l2 = train(pd.train, pd.valid, mc, tc).history[0].train_loss;
  tc.threads = 4;
  const double l3 = train(pd.train, pd.valid, mc, tc).history[0].train_loss;
  const bool loss = l1 == l2 && l1 == l3;
  auto yn = [](bool v) { return std::string(v ? "identical" : "DIFFERENT"); };
  return {corpora && splits && init && loss, "corpora " + yn(corpora) + ", splits " + yn(splits) + ", init " +
                                                 yn(init) + ", epoch-1 loss " + yn(loss) + " (" + fmt("%.17g", l1) +
                                                 ")"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "GT-T worked example", 1.0, worked_example},
      {2, "GT-T piecewise cases", 1.0, piecewise},
      {3, "GT-T property suite", 10.0, property_suite},
      {4, "F1 / Macro-F1 / AUC oracle equivalence", 30.0, classification_oracles},
      {5, "gradient check", 120.0, gradient_check},
      {6, "structural invariants", 60.0, structural},
      {7, "overfit sanity", 300.0, overfit},
      {8, "synthetic end-to-end", 7200.0, end_to_end},
      {9, "determinism", 600.0, determinism},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::stoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs <= c.budget_seconds;
    const bool pass = o.pass && in_time;
    if (!pass) ++failed;
    std::cout << (pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.title << ": " << o.detail << " ("
              << fmt("%.2f", secs) << " s" << (in_time ? "" : ", over the " + fmt("%.0f", c.budget_seconds) + " s budget")
              << ")" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
