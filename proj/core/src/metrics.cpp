#include "dami/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "dami/error.hpp"
#include "json.hpp"

namespace dami {

void GttConfig::validate() const {
  if (tolerance < 0) throw Error("GT-T tolerance must be >= 0");
  if (!(lambda > -1.0 && lambda < 1.0)) throw Error("GT-T lambda must lie in (-1, 1)");
  if (!(epsilon > 0.0)) throw Error("GT-T epsilon must be > 0");
}

std::vector<int> SessionPrediction::transferable_positions() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<int> hard_labels(std::span<const double> probs, std::optional<double> threshold) {
  std::vector<int> out;
  out.reserve(probs.size());
  for (double p : probs) out.push_back(threshold ? (p >= *threshold ? 1 : 0) : (p > 1.0 - p ? 1 : 0));
  return out;
}

namespace {

void check_positions(std::span<const int> pos, int length, const char* which) {
  std::set<int> seen;
  for (int p : pos) {
    if (p < 0 || p >= length) {
      throw Error(std::string(which) + " position " + std::to_string(p) + " outside [0, " + std::to_string(length - 1) + "]");
    }
    if (!seen.insert(p).second) throw Error(std::string("duplicate ") + which + " position " + std::to_string(p));
  }
}

int sign(int x) { return (x > 0) - (x < 0); }

}  // namespace

double gtt_session(std::span<const int> gold, std::span<const int> pred, const GttConfig& config, int length) {
  config.validate();
  check_positions(gold, length, "gold");
  check_positions(pred, length, "predicted");
  const std::size_t n = gold.size();
  const std::size_t m = pred.size();
  if (n == 0 && m == 0) return 1.0;
  if (n == 0 || m == 0) return 0.0;

  const double spread = 2.0 * (config.tolerance + config.epsilon) * (config.tolerance + config.epsilon);
  double total = 0.0;
  for (int p : pred) {
    double best = 0.0;
    for (int q : gold) {
      const int delta = p - q;
      const double coef = 1.0 / (config.lambda * sign(delta) - 1.0);
      best = std::max(best, std::exp(coef * static_cast<double>(delta) * delta / spread));
    }
    total += best;
  }
  return total / static_cast<double>(m);
}

namespace {

std::vector<const SessionPrediction*> align(const Corpus& gold, std::span<const SessionPrediction> preds) {
  std::unordered_map<std::string, const SessionPrediction*> by_id;
  std::vector<std::string> duplicates;
  for (const auto& p : preds) {
    if (!by_id.emplace(p.session_id, &p).second) duplicates.push_back(p.session_id);
  }
  std::vector<const SessionPrediction*> out;
  std::vector<std::string> missing;
  std::set<std::string> gold_ids;
  for (const auto& d : gold.dialogues) {
    gold_ids.insert(d.session_id);
    auto it = by_id.find(d.session_id);
    if (it == by_id.end()) {
      missing.push_back(d.session_id);
      continue;
    }
    if (it->second->labels.size() != d.length() || it->second->probs.size() != d.length()) {
      throw Error("session " + d.session_id + ": prediction length " + std::to_string(it->second->labels.size()) +
                  " does not match gold length " + std::to_string(d.length()));
    }
    out.push_back(it->second);
  }
  std::vector<std::string> extra;
  for (const auto& p : preds) {
    if (!gold_ids.count(p.session_id)) extra.push_back(p.session_id);
  }
  if (!missing.empty() || !extra.empty() || !duplicates.empty()) {
    auto list = [](const std::vector<std::string>& ids) {
      std::string s;
      for (std::size_t i = 0; i < ids.size() && i < 20; ++i) s += (i ? ", " : "") + ids[i];
      if (ids.size() > 20) s += ", ...";
      return s;
    };
    std::string msg = "predictions do not align with gold sessions;";
    if (!missing.empty()) msg += " missing: " + list(missing) + ";";
    if (!extra.empty()) msg += " extra: " + list(extra) + ";";
    if (!duplicates.empty()) msg += " duplicated: " + list(duplicates) + ";";
    throw Error(msg);
  }
  return out;
}

}  // namespace

double gtt_corpus(const Corpus& gold, std::span<const SessionPrediction> preds, const GttConfig& config) {
  const auto aligned = align(gold, preds);
  if (aligned.empty()) throw Error("cannot score an empty corpus");
  double sum = 0.0;
  for (std::size_t i = 0; i < aligned.size(); ++i) {
    const auto& d = gold.dialogues[i];
    sum += gtt_session(d.transferable_positions(), aligned[i]->transferable_positions(), config,
                       static_cast<int>(d.length()));
  }
  return sum / static_cast<double>(aligned.size());
}

F1Scores f1_macro_f1(std::span<const int> gold, std::span<const int> pred) {
  if (gold.size() != pred.size()) {
    throw Error("label length mismatch: " + std::to_string(gold.size()) + " gold vs " + std::to_string(pred.size()) + " predicted");
  }
  long long tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if ((gold[i] != 0 && gold[i] != 1) || (pred[i] != 0 && pred[i] != 1)) throw Error("labels must be 0 or 1");
    if (gold[i] == 1) {
      (pred[i] == 1 ? tp : fn)++;
    } else {
      (pred[i] == 1 ? fp : tn)++;
    }
  }
  auto f1 = [](long long t, long long false_pos, long long false_neg) {
    const double p = t + false_pos > 0 ? static_cast<double>(t) / static_cast<double>(t + false_pos) : 0.0;
    const double r = t + false_neg > 0 ? static_cast<double>(t) / static_cast<double>(t + false_neg) : 0.0;
    return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  };
  F1Scores s;
  s.f1 = f1(tp, fp, fn);
  s.macro_f1 = 0.5 * (s.f1 + f1(tn, fn, fp));
  return s;
}

double auc(std::span<const int> gold, std::span<const double> scores) {
  if (gold.size() != scores.size()) throw Error("AUC: label and score lengths differ");
  const std::size_t n = gold.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  long long n_pos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (gold[i] != 0 && gold[i] != 1) throw Error("labels must be 0 or 1");
    if (!(scores[i] >= 0.0 && scores[i] <= 1.0)) throw Error("AUC: scores must lie in [0, 1]");
    n_pos += gold[i];
  }
  const long long n_neg = static_cast<long long>(n) - n_pos;
  if (n_pos == 0 || n_neg == 0) throw Error("AUC undefined: gold labels contain a single class; skip this metric");
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t r = i; r <= j; ++r) {
      if (gold[order[r]] == 1) rank_sum += avg_rank;
    }
    i = j + 1;
  }
  const double np = static_cast<double>(n_pos);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

Report evaluate_predictions(const Corpus& gold, std::span<const SessionPrediction> preds, double lambda) {
  const auto aligned = align(gold, preds);
  if (aligned.empty()) throw Error("cannot evaluate an empty corpus");
  std::vector<int> g, p;
  std::vector<double> s;
  for (std::size_t i = 0; i < aligned.size(); ++i) {
    for (const auto& u : gold.dialogues[i].utterances) g.push_back(u.label == Label::kTransferable ? 1 : 0);
    p.insert(p.end(), aligned[i]->labels.begin(), aligned[i]->labels.end());
    s.insert(s.end(), aligned[i]->probs.begin(), aligned[i]->probs.end());
  }
  const auto f = f1_macro_f1(g, p);
  const bool both = std::find(g.begin(), g.end(), 0) != g.end() && std::find(g.begin(), g.end(), 1) != g.end();
  Report r;
  r.emplace_back("F1", f.f1);
  r.emplace_back("MacroF1", f.macro_f1);
  r.emplace_back("AUC", both ? auc(g, s) : std::numeric_limits<double>::quiet_NaN());
  const char* names[] = {"GT-I", "GT-II", "GT-III"};
  for (int t = 1; t <= 3; ++t) {
    GttConfig cfg;
    cfg.tolerance = t;
    cfg.lambda = lambda;
    r.emplace_back(names[t - 1], gtt_corpus(gold, preds, cfg));
  }
  return r;
}

std::string report_to_json(const Report& report) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [k, v] : report) {
    if (std::isnan(v)) {
      j[k] = nullptr;
    } else {
      j[k] = v;
    }
  }
  return j.dump();
}

std::string report_to_table(const Report& report) {
  std::ostringstream out;
  char buf[64];
  for (const auto& [k, v] : report) {
    if (std::isnan(v)) {
      std::snprintf(buf, sizeof buf, "%-8s  %s\n", k.c_str(), "n/a");
    } else {
      std::snprintf(buf, sizeof buf, "%-8s  %.4f\n", k.c_str(), v);
    }
    out << buf;
  }
  return out.str();
}

// ---------------------------------------------------------------------------

std::vector<SessionPrediction> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open predictions file " + path.string());
  return read_predictions(in, path.string());
}

std::vector<SessionPrediction> read_predictions(std::istream& in, std::string_view source_name) {
  std::vector<SessionPrediction> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    const std::string where = std::string(source_name) + ":" + std::to_string(line_no) + ": ";
    SessionPrediction p;
    try {
      const auto j = nlohmann::json::parse(line);
      if (!j.is_object()) throw Error("record is not a JSON object");
      for (const char* field : {"session_id", "probs", "labels"}) {
        if (!j.contains(field)) throw Error(std::string("missing field \"") + field + "\"");
      }
      p.session_id = j.at("session_id").get<std::string>();
      p.probs = j.at("probs").get<std::vector<double>>();
      p.labels = j.at("labels").get<std::vector<int>>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(where + "malformed prediction record (" + e.what() + ")");
    } catch (const Error& e) {
      throw Error(where + e.what());
    }
    if (p.probs.size() != p.labels.size()) throw Error(where + "probs and labels differ in length");
    for (double v : p.probs) {
      if (!(v >= 0.0 && v <= 1.0)) throw Error(where + "probability outside [0, 1]");
    }
    for (int l : p.labels) {
      if (l != 0 && l != 1) throw Error(where + "labels must be 0 or 1");
    }
    out.push_back(std::move(p));
  }
  return out;
}

void write_predictions(std::span<const SessionPrediction> preds, std::ostream& out) {
  for (const auto& p : preds) {
    nlohmann::ordered_json j;
    j["session_id"] = p.session_id;
    j["probs"] = p.probs;
    j["labels"] = p.labels;
    out << j.dump() << '\n';
  }
}

void write_predictions(std::span<const SessionPrediction> preds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write predictions file " + path.string());
  write_predictions(preds, out);
}

const std::vector<double>& default_lambda_grid() {
  static const std::vector<double> grid = {-0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75};
  return grid;
}

}  // namespace dami
