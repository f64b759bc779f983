#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "dami/checkpoint.hpp"
#include "dami/corpus.hpp"
#include "dami/error.hpp"
#include "dami/featurize.hpp"
#include "dami/metrics.hpp"
#include "dami/synthetic.hpp"
#include "dami/training.hpp"
#include "json.hpp"
#include "manifest.hpp"

namespace dami::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

fs::path output_path(const fs::path& path) {
  const char* dir = std::getenv("DAMI_OUTPUT_DIR");
  if (dir == nullptr || *dir == '\0' || path.is_absolute()) return path;
  return fs::path(dir) / path;
}

namespace {

fs::path prepare_output(const fs::path& requested) {
  const fs::path p = output_path(requested);
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
    if (ec) throw Error("cannot create directory " + p.parent_path().string() + ": " + ec.message());
  }
  return p;
}

fs::path prepare_output_dir(const fs::path& requested) {
  const fs::path p = output_path(requested);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw Error("cannot create directory " + p.string() + ": " + ec.message());
  return p;
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw Error(what + " " + p.string() + " does not exist");
}

fs::path sidecar(const fs::path& file) { return fs::path(file.string() + ".manifest.json"); }

// Every option of a subcommand with its effective value.
ojson resolved_options(const CLI::App& app) {
  ojson j = ojson::object();
  for (const CLI::Option* opt : app.get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help") continue;
    std::string value;
    if (opt->count() > 0) {
      const auto& res = opt->results();
      for (std::size_t i = 0; i < res.size(); ++i) value += (i ? "," : "") + res[i];
    } else {
      value = opt->get_default_str();
    }
    j[name] = value;
  }
  return j;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Shared option groups

struct ModelArgs {
  ModelConfig config;
  std::string encoder_mode = "difficulty";

  void add(CLI::App* app) {
    app->add_option("--word-dim", config.word_dim, "Word embedding size d");
    app->add_option("--hidden", config.hidden, "Recurrent hidden units k");
    app->add_option("--attention", config.attention, "Attention units z");
    app->add_option("--max-dialogue-length", config.max_dialogue_length, "Matching feature width");
    app->add_option("--dropout", config.dropout, "Drop probability");
    app->add_option("--use-emotion", config.use_emotion, "Append the emotion score to v_t");
    app->add_option("--use-matching", config.use_matching, "Enable matching inference");
    app->add_option("--encoder-mode", encoder_mode, "difficulty | plain_birnn | birnn_self_attention");
  }
  ModelConfig resolve() {
    config.encoder_mode = parse_encoder_mode(encoder_mode);
    return config;
  }
};

struct TrainArgs {
  TrainConfig config;
  std::string selection = "macro_f1";

  void add(CLI::App* app) {
    app->add_option("--learning-rate", config.learning_rate);
    app->add_option("--batch-size", config.batch_size);
    app->add_option("--epochs", config.epochs);
    app->add_option("--l2", config.l2, "L2 weight");
    app->add_option("--seed", config.seed, "Initialization, shuffling and dropout seed");
    app->add_option("--selection", selection, "Validation metric for checkpoint selection: macro_f1 | gt_ii");
    app->add_option("--beta1", config.beta1);
    app->add_option("--beta2", config.beta2);
    app->add_option("--adam-epsilon", config.adam_epsilon);
    app->add_option("--clip-norm", config.clip_norm, "Global gradient norm bound, 0 disables");
    app->add_option("--threads", config.threads, "Worker threads, 0 = all cores");
  }
  TrainConfig resolve() {
    config.selection = parse_selection_metric(selection);
    config.validate();
    return config;
  }
};

struct FeatureArgs {
  std::string lexicon;
  std::string tag_table;
  std::string tag_fallback = "x";

  void add(CLI::App* app) {
    app->add_option("--lexicon", lexicon, "token<TAB>polarity file; built-in lexicon when omitted");
    app->add_option("--tag-table", tag_table, "token<TAB>tag file; synthetic tagger when omitted");
    app->add_option("--tag-fallback", tag_fallback, "Tag for tokens missing from the tag table");
  }
  std::shared_ptr<const Tagger> tagger() const {
    if (tag_table.empty()) return std::make_shared<const SyntheticTagger>();
    require_file(tag_table, "tag table");
    return std::make_shared<const TableTagger>(TableTagger::from_file(tag_table, tag_fallback));
  }
  std::shared_ptr<const EmotionScorer> scorer() const {
    if (lexicon.empty()) return std::make_shared<const LexiconScorer>();
    require_file(lexicon, "lexicon");
    return std::make_shared<const LexiconScorer>(LexiconScorer::from_file(lexicon));
  }
  std::vector<fs::path> inputs() const {
    std::vector<fs::path> out;
    if (!lexicon.empty()) out.emplace_back(lexicon);
    if (!tag_table.empty()) out.emplace_back(tag_table);
    return out;
  }
};

struct DataArgs {
  std::string corpus;
  SplitSpec split;
  int min_count = 1;

  void add(CLI::App* app) {
    app->add_option("--corpus", corpus, "Dialogue JSONL")->required();
    app->add_option("--train-fraction", split.train);
    app->add_option("--valid-fraction", split.valid);
    app->add_option("--test-fraction", split.test);
    app->add_option("--split-seed", split.seed, "Seed of the dialogue-level split");
    app->add_option("--min-count", min_count, "Minimum token count for the vocabulary");
  }

  PreparedData load(const FeatureArgs& feats, const ModelConfig& model) const {
    require_file(corpus, "corpus");
    Corpus c = ingest_jsonl(corpus);
    PrepareOptions po;
    po.split = split;
    po.min_count = min_count;
    po.tagger = feats.tagger();
    po.scorer = feats.scorer();
    if (!feats.tag_table.empty()) c.pos_tagset = dynamic_cast<const TableTagger&>(*po.tagger).tags();
    for (const auto& d : c.dialogues) {
      if (static_cast<int>(d.length()) > model.max_dialogue_length) {
        throw Error("session " + d.session_id + " has " + std::to_string(d.length()) +
                    " utterances, above --max-dialogue-length " + std::to_string(model.max_dialogue_length));
      }
    }
    return prepare_data(c, po);
  }
};

void print_epoch(std::ostream& err, const std::string& prefix, const EpochRecord& r, int epochs) {
  err << prefix << "epoch " << r.epoch << "/" << epochs << " loss " << std::fixed << std::setprecision(5)
      << r.train_loss << " valid MacroF1 " << std::setprecision(4) << report_value(r.valid, "MacroF1") << " GT-II "
      << report_value(r.valid, "GT-II") << '\n'
      << std::defaultfloat;
}

// ---------------------------------------------------------------------------
// Commands

struct SynthCmd {
  SyntheticOptions opt;
  std::string out;

  void add(CLI::App* app) {
    app->add_option("--n", opt.n_dialogues, "Number of dialogues");
    app->add_option("--seed", opt.seed);
    app->add_option("--out", out, "Output JSONL")->required();
    app->add_option("--demand-rate", opt.rates.explicit_demand);
    app->add_option("--unsatisfactory-rate", opt.rates.unsatisfactory_answer);
    app->add_option("--emotion-rate", opt.rates.negative_emotion);
    app->add_option("--repeat-rate", opt.rates.repeated_utterance);
    app->add_option("--normal-fraction", opt.normal_fraction, "Fraction of dialogues without handoff");
    app->add_option("--mean-utterances", opt.mean_utterances);
    app->add_option("--min-utterances", opt.min_utterances);
    app->add_option("--max-utterances", opt.max_utterances);
    app->add_option("--mean-tokens", opt.mean_tokens);
    app->add_option("--same-role-rate", opt.same_role_rate);
    app->add_option("--content-vocabulary", opt.content_vocabulary);
    app->add_option("--zipf-exponent", opt.zipf_exponent);
    app->add_option("--session-prefix", opt.session_prefix);
  }

  int exec(const CLI::App& app, std::ostream& os) {
    const auto syn = generate_synthetic(opt);
    const fs::path path = prepare_output(out);
    write_jsonl(syn.corpus, path);
    const auto stats = corpus_stats(syn.corpus);
    os << "wrote " << stats.dialogues << " dialogues (" << stats.utterances << " utterances, "
       << stats.transferable_utterances << " transferable) to " << path.string() << '\n';
    write_manifest({"synth", opt.seed, resolved_options(app), {}, {path}}, sidecar(path));
    return 0;
  }
};

struct IngestCheckCmd {
  std::string corpus;
  std::string report = "ingest_report.json";

  void add(CLI::App* app) {
    app->add_option("--corpus", corpus, "Dialogue JSONL")->required();
    app->add_option("--report", report, "Statistics JSON");
  }

  int exec(const CLI::App& app, std::ostream& os) {
    require_file(corpus, "corpus");
    const Corpus c = ingest_jsonl(corpus);
    const auto s = corpus_stats(c);
    ojson j;
    j["dialogues"] = s.dialogues;
    j["normal_dialogues"] = s.normal_dialogues;
    j["utterances"] = s.utterances;
    j["transferable_utterances"] = s.transferable_utterances;
    j["mean_utterances"] = s.mean_utterances;
    j["mean_tokens"] = s.mean_tokens;
    j["std_tokens"] = s.std_tokens;
    std::size_t longest = 0;
    for (const auto& d : c.dialogues) longest = std::max(longest, d.length());
    j["max_utterances"] = longest;
    os << "ok: " << corpus << '\n';
    for (const auto& [k, v] : j.items()) os << "  " << k << ": " << v.dump() << '\n';
    const fs::path path = prepare_output(report);
    write_text(path, j.dump(2) + "\n");
    write_manifest({"ingest-check", 0, resolved_options(app), {corpus}, {path}}, sidecar(path));
    return 0;
  }
};

struct TrainCmd {
  DataArgs data;
  FeatureArgs feats;
  ModelArgs model;
  TrainArgs train_args;
  std::string out_dir;
  double lambda = 0.0;
  std::optional<double> threshold;
  bool quiet = false;

  void add(CLI::App* app) {
    data.add(app);
    feats.add(app);
    model.add(app);
    train_args.add(app);
    app->add_option("--out-dir", out_dir, "Directory for checkpoint, logs and report")->required();
    app->add_option("--lambda", lambda, "GT-T asymmetry for the test report");
    app->add_option("--threshold", threshold, "Decision threshold; argmax when omitted");
    app->add_flag("--quiet", quiet, "No per-epoch progress");
  }

  int exec(const CLI::App& app, std::ostream& os, std::ostream& es) {
    const ModelConfig base = model.resolve();
    const TrainConfig tc = train_args.resolve();
    const PreparedData pd = data.load(feats, base);
    const ModelConfig mc = bind_model_config(base, *pd.featurizer);
    mc.validate();
    const fs::path dir = prepare_output_dir(out_dir);

    std::ofstream log(dir / "train_log.jsonl");
    if (!log) throw Error("cannot write " + (dir / "train_log.jsonl").string());
    const auto state = train(pd.train, pd.valid, mc, tc, [&](const EpochRecord& r) {
      log << epoch_record_json(r) << '\n' << std::flush;
      if (!quiet) print_epoch(es, "", r, tc.epochs);
    });

    // Evaluate what the checkpoint will hold, so a reload scores identically.
    Checkpoint ck{mc, round_to_float32(state.best_params), pd.featurizer->vocabulary(), pd.featurizer->tagset(),
                  pd.featurizer->frequencies()};
    save_checkpoint(ck, dir / "model.ckpt");
    const auto preds = predict(pd.test, ck.params, mc, threshold, tc.threads);
    const Report report = evaluate_predictions(pd.test.gold, preds, lambda);
    write_jsonl(pd.test.gold, dir / "test.jsonl");
    write_predictions(preds, dir / "test_predictions.jsonl");
    write_text(dir / "report.json", report_to_json(report) + "\n");

    ojson summary;
    summary["best_epoch"] = state.best_epoch;
    summary["best_valid_score"] = state.best_score;
    summary["selection"] = std::string(to_string(tc.selection));
    summary["splits"] = {{"train", pd.train.size()}, {"valid", pd.valid.size()}, {"test", pd.test.size()}};
    summary["parameters"] = state.best_params.parameter_count();
    write_text(dir / "summary.json", summary.dump(2) + "\n");

    os << "best epoch " << state.best_epoch << " (" << to_string(tc.selection) << " " << state.best_score << ")\n"
       << report_to_table(report);

    auto cfg = resolved_options(app);
    cfg["model"] = ojson::parse(model_config_to_json(mc));
    auto inputs = feats.inputs();
    inputs.insert(inputs.begin(), fs::path(data.corpus));
    write_manifest({"train", tc.seed, cfg, inputs,
                    {dir / "model.ckpt", dir / "train_log.jsonl", dir / "test.jsonl", dir / "test_predictions.jsonl",
                     dir / "report.json", dir / "summary.json"}},
                   dir / "manifest.json");
    return 0;
  }
};

struct PredictCmd {
  std::string checkpoint;
  std::string corpus;
  std::string out;
  FeatureArgs feats;
  std::optional<double> threshold;
  int threads = 0;

  void add(CLI::App* app) {
    app->add_option("--checkpoint", checkpoint)->required();
    app->add_option("--corpus", corpus, "Dialogue JSONL; labels are ignored")->required();
    app->add_option("--out", out, "Predictions JSONL")->required();
    app->add_option("--threshold", threshold, "Decision threshold; argmax when omitted");
    app->add_option("--threads", threads);
    feats.add(app);
  }

  int exec(const CLI::App& app, std::ostream& os) {
    require_file(checkpoint, "checkpoint");
    require_file(corpus, "corpus");
    const Checkpoint ck = load_checkpoint(checkpoint);
    const Featurizer fz(ck.vocabulary, ck.pos_tagset, ck.frequencies, feats.tagger(), feats.scorer());
    const Dataset ds = make_dataset(ingest_jsonl(corpus), fz);
    const auto preds = predict(ds, ck.params, ck.config, threshold, threads);
    const fs::path path = prepare_output(out);
    write_predictions(preds, path);
    os << "wrote predictions for " << preds.size() << " dialogues to " << path.string() << '\n';
    auto inputs = feats.inputs();
    inputs.insert(inputs.begin(), {fs::path(checkpoint), fs::path(corpus)});
    write_manifest({"predict", 0, resolved_options(app), inputs, {path}}, sidecar(path));
    return 0;
  }
};

struct ScoreCmd {
  std::string gold;
  std::string pred;
  double lambda = 0.0;
  std::string report = "score_report.json";

  void add(CLI::App* app) {
    app->add_option("--gold", gold, "Gold dialogue JSONL")->required();
    app->add_option("--pred", pred, "Predictions JSONL")->required();
    app->add_option("--lambda", lambda, "GT-T asymmetry in (-1, 1)");
    app->add_option("--report", report, "Report JSON");
  }

  int exec(const CLI::App& app, std::ostream& os) {
    require_file(gold, "gold file");
    require_file(pred, "predictions file");
    const Report r = evaluate_predictions(ingest_jsonl(gold), read_predictions(pred), lambda);
    os << report_to_table(r);
    const fs::path path = prepare_output(report);
    write_text(path, report_to_json(r) + "\n");
    write_manifest({"score", 0, resolved_options(app), {gold, pred}, {path}}, sidecar(path));
    return 0;
  }
};

struct SweepCmd {
  std::string gold;
  std::string pred;
  std::vector<double> lambdas = default_lambda_grid();
  std::string report = "lambda_sweep.json";

  void add(CLI::App* app) {
    app->add_option("--gold", gold, "Gold dialogue JSONL")->required();
    app->add_option("--pred", pred, "Predictions JSONL")->required();
    app->add_option("--lambdas", lambdas, "Comma-separated grid")->delimiter(',');
    app->add_option("--report", report, "Sweep JSON");
  }

  int exec(const CLI::App& app, std::ostream& os) {
    require_file(gold, "gold file");
    require_file(pred, "predictions file");
    const auto preds = read_predictions(pred);
    const auto rows = lambda_sweep(ingest_jsonl(gold), preds, lambdas);
    ojson j = ojson::array();
    os << std::left << std::setw(8) << "lambda" << std::setw(10) << "GT-I" << std::setw(10) << "GT-II"
       << "GT-III\n";
    for (const auto& [l, r] : rows) {
      ojson row;
      row["lambda"] = l;
      for (const char* k : {"GT-I", "GT-II", "GT-III"}) row[k] = report_value(r, k);
      j.push_back(row);
      os << std::fixed << std::setprecision(4) << std::setw(8) << l << std::setw(10) << report_value(r, "GT-I")
         << std::setw(10) << report_value(r, "GT-II") << report_value(r, "GT-III") << '\n';
    }
    os << std::defaultfloat;
    const fs::path path = prepare_output(report);
    write_text(path, j.dump(2) + "\n");
    write_manifest({"sweep-lambda", 0, resolved_options(app), {gold, pred}, {path}}, sidecar(path));
    return 0;
  }
};

struct AblateCmd {
  DataArgs data;
  FeatureArgs feats;
  ModelArgs model;
  TrainArgs train_args;
  std::string out_dir;
  std::vector<std::string> variants;
  std::vector<std::uint64_t> seeds;
  double lambda = 0.0;
  bool quiet = false;

  void add(CLI::App* app) {
    data.add(app);
    feats.add(app);
    model.add(app);
    train_args.add(app);
    app->add_option("--out-dir", out_dir, "Directory for the comparison report")->required();
    app->add_option("--variants", variants, "full,no_emotion,no_matching,no_difficulty,plain_attention")
        ->delimiter(',');
    app->add_option("--seeds", seeds, "Comma-separated training seeds; defaults to --seed")->delimiter(',');
    app->add_option("--lambda", lambda, "GT-T asymmetry for the test reports");
    app->add_flag("--quiet", quiet, "No per-epoch progress");
  }

  int exec(const CLI::App& app, std::ostream& os, std::ostream& es) {
    const ModelConfig base = model.resolve();
    TrainConfig tc = train_args.resolve();
    std::vector<Variant> chosen;
    if (variants.empty()) {
      chosen = all_variants();
    } else {
      for (const auto& v : variants) chosen.push_back(parse_variant(v));
    }
    if (seeds.empty()) seeds.push_back(tc.seed);
    const PreparedData pd = data.load(feats, base);
    const fs::path dir = prepare_output_dir(out_dir);

    static const std::vector<std::string> keys = {"F1", "MacroF1", "AUC", "GT-I", "GT-II", "GT-III"};
    std::map<Variant, std::vector<Report>> by_variant;
    ojson runs = ojson::array();
    for (std::uint64_t seed : seeds) {
      tc.seed = seed;
      const auto results = ablate(pd, base, tc, chosen, lambda, [&](Variant v, const EpochRecord& r) {
        if (!quiet) print_epoch(es, std::string(to_string(v)) + " seed " + std::to_string(seed) + " ", r, tc.epochs);
      });
      for (const auto& r : results) {
        by_variant[r.variant].push_back(r.test_report);
        ojson run;
        run["variant"] = std::string(to_string(r.variant));
        run["seed"] = seed;
        run["best_epoch"] = r.state.best_epoch;
        run["test"] = ojson::parse(report_to_json(r.test_report));
        runs.push_back(std::move(run));
      }
    }

    std::ostringstream table;
    table << std::left << std::setw(18) << "variant";
    for (const auto& k : keys) table << std::setw(10) << k;
    table << '\n';
    ojson means = ojson::object();
    for (Variant v : chosen) {
      table << std::setw(18) << to_string(v);
      ojson m = ojson::object();
      for (const auto& k : keys) {
        double sum = 0.0;
        for (const auto& r : by_variant[v]) sum += report_value(r, k);
        const double mean = sum / static_cast<double>(by_variant[v].size());
        table << std::setw(10) << std::fixed << std::setprecision(4) << mean;
        if (std::isnan(mean)) {
          m[k] = nullptr;
        } else {
          m[k] = mean;
        }
      }
      table << '\n';
      means[std::string(to_string(v))] = std::move(m);
    }
    os << table.str();
    ojson out;
    out["mean"] = std::move(means);
    out["runs"] = std::move(runs);
    write_text(dir / "ablation.json", out.dump(2) + "\n");
    write_text(dir / "ablation.txt", table.str());

    auto cfg = resolved_options(app);
    cfg["model"] = ojson::parse(model_config_to_json(bind_model_config(base, *pd.featurizer)));
    auto inputs = feats.inputs();
    inputs.insert(inputs.begin(), fs::path(data.corpus));
    write_manifest({"ablate", seeds.front(), cfg, inputs, {dir / "ablation.json", dir / "ablation.txt"}},
                   dir / "manifest.json");
    return 0;
  }
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app("Machine-human chatting handoff: data, training and evaluation", "dami");
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  SynthCmd synth;
  IngestCheckCmd ingest;
  TrainCmd train_cmd;
  PredictCmd predict_cmd;
  ScoreCmd score;
  SweepCmd sweep;
  AblateCmd ablate_cmd;

  auto* s_synth = app.add_subcommand("synth", "Generate a synthetic labeled corpus");
  auto* s_ingest = app.add_subcommand("ingest-check", "Validate a dialogue JSONL file and print statistics");
  auto* s_train = app.add_subcommand("train", "Train on a corpus split and report test metrics");
  auto* s_predict = app.add_subcommand("predict", "Predict per-utterance handoff probabilities");
  auto* s_score = app.add_subcommand("score", "Score predictions against gold labels");
  auto* s_sweep = app.add_subcommand("sweep-lambda", "GT-T scores over a grid of lambda values");
  auto* s_ablate = app.add_subcommand("ablate", "Train and compare model variants");
  synth.add(s_synth);
  ingest.add(s_ingest);
  train_cmd.add(s_train);
  predict_cmd.add(s_predict);
  score.add(s_score);
  sweep.add(s_sweep);
  ablate_cmd.add(s_ablate);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const CLI::App* target = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    out << target->help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    const CLI::App* target = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << "error: " << one_line(e.what()) << '\n' << target->help();
    return 2;
  }

  try {
    if (s_synth->parsed()) return synth.exec(*s_synth, out);
    if (s_ingest->parsed()) return ingest.exec(*s_ingest, out);
    if (s_train->parsed()) return train_cmd.exec(*s_train, out, err);
    if (s_predict->parsed()) return predict_cmd.exec(*s_predict, out);
    if (s_score->parsed()) return score.exec(*s_score, out);
    if (s_sweep->parsed()) return sweep.exec(*s_sweep, out);
    if (s_ablate->parsed()) return ablate_cmd.exec(*s_ablate, out, err);
  } catch (const std::exception& e) {
    err << "error: " << one_line(e.what()) << '\n';
    return 1;
  }
  err << app.help();
  return 2;
}

}  // namespace dami::cli
