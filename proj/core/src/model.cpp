#include "dami/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dami/error.hpp"

namespace dami {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string_view to_string(EncoderMode mode) {
  switch (mode) {
    case EncoderMode::kDifficulty: return "difficulty";
    case EncoderMode::kPlainBiRnn: return "plain_birnn";
    case EncoderMode::kBiRnnSelfAttention: return "birnn_self_attention";
  }
  return "unknown";
}

EncoderMode parse_encoder_mode(std::string_view text) {
  if (text == "difficulty") return EncoderMode::kDifficulty;
  if (text == "plain_birnn") return EncoderMode::kPlainBiRnn;
  if (text == "birnn_self_attention") return EncoderMode::kBiRnnSelfAttention;
  throw Error("unknown encoder mode \"" + std::string(text) + "\"");
}

void ModelConfig::validate() const {
  if (word_dim < 2 || word_dim % 2 != 0) throw Error("word_dim must be even and >= 2");
  if (hidden < 1) throw Error("hidden must be >= 1");
  if (attention < 1) throw Error("attention must be >= 1");
  if (max_dialogue_length < 1) throw Error("max_dialogue_length must be >= 1");
  if (pos_tags < 1) throw Error("pos_tags must be >= 1");
  if (vocab_size < 2) throw Error("vocab_size must cover the reserved ids");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("dropout must lie in [0, 1)");
}

// ---------------------------------------------------------------------------
// Parameters

ModelParams ModelParams::zeros(const ModelConfig& c) {
  c.validate();
  const Index d = c.word_dim, k = c.hidden, z = c.attention, in = c.encoder_input();
  ModelParams p;
  p.embedding = MatrixXd::Zero(d, c.vocab_size);
  p.word_fw = LstmWeights(in, k);
  p.word_bw = LstmWeights(in, k);
  const bool difficulty = c.encoder_mode == EncoderMode::kDifficulty;
  const bool self_attn = c.encoder_mode == EncoderMode::kBiRnnSelfAttention;
  p.attn_w_customer = MatrixXd::Zero(difficulty ? z : 0, difficulty ? in : 0);
  p.attn_w_agent = p.attn_w_customer;
  p.attn_b_customer = VectorXd::Zero(difficulty ? z : 0);
  p.attn_b_agent = p.attn_b_customer;
  p.attn_g_customer = p.attn_b_customer;
  p.attn_g_agent = p.attn_b_customer;
  p.self_attn_w = MatrixXd::Zero(self_attn ? z : 0, self_attn ? 2 * k : 0);
  p.self_attn_b = VectorXd::Zero(self_attn ? z : 0);
  p.self_attn_g = p.self_attn_b;
  p.fusion_w = MatrixXd::Zero(k, c.utterance_dim() + c.max_dialogue_length);
  p.fusion_b = VectorXd::Zero(k);
  p.context = LstmWeights(k, k);
  p.context_attn_w = MatrixXd::Zero(k, k);
  p.proj_w = MatrixXd::Zero(k, 2 * k);
  p.proj_b = VectorXd::Zero(k);
  p.cls_w = MatrixXd::Zero(2, k);
  p.cls_b = VectorXd::Zero(2);
  return p;
}

void ModelParams::set_zero() {
  visit([](std::string_view, Index rows, Index cols, double* data) { std::fill(data, data + rows * cols, 0.0); });
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  visit([&](std::string_view, Index rows, Index cols, const double*) { n += static_cast<std::size_t>(rows * cols); });
  return n;
}

double ModelParams::squared_norm() const {
  double s = 0.0;
  visit([&](std::string_view, Index rows, Index cols, const double* data) {
    s += Eigen::Map<const VectorXd>(data, rows * cols).squaredNorm();
  });
  return s;
}

bool ModelParams::all_finite() const {
  bool ok = true;
  visit([&](std::string_view, Index rows, Index cols, const double* data) {
    ok = ok && Eigen::Map<const VectorXd>(data, rows * cols).allFinite();
  });
  return ok;
}

void ModelParams::add_scaled(const ModelParams& other, double scale) {
  std::vector<const double*> src;
  other.visit([&](std::string_view, Index, Index, const double* data) { src.push_back(data); });
  std::size_t i = 0;
  visit([&](std::string_view, Index rows, Index cols, double* data) {
    Eigen::Map<VectorXd>(data, rows * cols) += scale * Eigen::Map<const VectorXd>(src[i++], rows * cols);
  });
}

double glorot_bound(Index rows, Index cols) { return std::sqrt(6.0 / static_cast<double>(rows + cols)); }

namespace {

bool is_bias(std::string_view name) {
  return name.ends_with(".b") || name.ends_with("_b") || name.find("_b_") != std::string_view::npos;
}

}  // namespace

ModelParams init_params(const ModelConfig& config, std::uint64_t seed, const std::optional<MatrixXd>& pretrained) {
  ModelParams p = ModelParams::zeros(config);
  Rng rng(seed);
  p.visit([&](std::string_view name, Index rows, Index cols, double* data) {
    if (rows * cols == 0) return;
    if (name == "embedding") {
      for (Index i = 0; i < rows * cols; ++i) data[i] = rng.uniform(-0.05, 0.05);
      return;
    }
    if (is_bias(name)) return;
    const double bound = glorot_bound(rows, cols);
    for (Index i = 0; i < rows * cols; ++i) data[i] = rng.uniform(-bound, bound);
  });
  if (pretrained) {
    if (pretrained->rows() != p.embedding.rows() || pretrained->cols() != p.embedding.cols()) {
      throw Error("pretrained embedding has shape " + std::to_string(pretrained->rows()) + "x" +
                  std::to_string(pretrained->cols()) + ", expected " + std::to_string(p.embedding.rows()) + "x" +
                  std::to_string(p.embedding.cols()));
    }
    p.embedding = *pretrained;
  }
  return p;
}

// ---------------------------------------------------------------------------
// Shared pieces

VectorXd masked_softmax(const VectorXd& logits, const std::vector<bool>& mask) {
  if (static_cast<Index>(mask.size()) != logits.size()) throw Error("masked_softmax: mask length mismatch");
  VectorXd out = VectorXd::Zero(logits.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < logits.size(); ++i) {
    if (mask[static_cast<std::size_t>(i)]) mx = std::max(mx, logits(i));
  }
  if (!std::isfinite(mx)) return out;
  double sum = 0.0;
  for (Index i = 0; i < logits.size(); ++i) {
    if (mask[static_cast<std::size_t>(i)]) {
      out(i) = std::exp(logits(i) - mx);
      sum += out(i);
    }
  }
  return out / sum;
}

MatrixXd matching_features(std::span<const VectorXd> vectors, const ModelConfig& config) {
  const auto L = static_cast<Index>(vectors.size());
  if (L > config.max_dialogue_length) {
    throw Error("dialogue of " + std::to_string(L) + " utterances exceeds max_dialogue_length " +
                std::to_string(config.max_dialogue_length) + "; split the dialogue or raise the limit");
  }
  MatrixXd m = MatrixXd::Zero(L, L);
  for (Index t = 1; t < L; ++t) {
    for (Index j = 0; j < t; ++j) m(t, j) = vectors[static_cast<std::size_t>(t)].dot(vectors[static_cast<std::size_t>(j)]);
  }
  return m;
}

namespace {

void check_finite(const MatrixXd& m, const char* layer) {
  if (!m.allFinite()) throw Error(std::string("non-finite values in layer ") + layer);
}

Eigen::Vector2d softmax2(const Eigen::Vector2d& z) {
  const double mx = z.maxCoeff();
  Eigen::Vector2d e = (z.array() - mx).exp();
  return e / e.sum();
}

MatrixXd dropout_mask(Index rows, Index cols, double rate, const ForwardOptions& opt) {
  if (!opt.train || rate <= 0.0) return MatrixXd::Ones(rows, cols);
  if (opt.rng == nullptr) throw Error("training forward pass with dropout needs an rng");
  MatrixXd mask(rows, cols);
  const double keep = 1.0 / (1.0 - rate);
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = opt.rng->uniform() >= rate ? keep : 0.0;
  return mask;
}

struct UtteranceTrace {
  MatrixXd x;
  LstmTrace fw, bw;
  MatrixXd o;
  MatrixXd g;
  MatrixXd w_mix;
  VectorXd b_mix, g_mix;
  VectorXd scale;
  VectorXd alpha;
  VectorXd v;
  double role = 1.0;
};

MatrixXd encoder_input(const FeaturizedUtterance& f, const ModelParams& p, const ModelConfig& c) {
  const std::size_t n = f.token_ids.size();
  if (n == 0) throw Error("utterance has no tokens");
  if (f.pos_ids.size() != n) throw Error("shape mismatch: pos_ids has " + std::to_string(f.pos_ids.size()) + " entries, token_ids " + std::to_string(n));
  if (f.term_freqs.size() != n) throw Error("shape mismatch: term_freqs has " + std::to_string(f.term_freqs.size()) + " entries, token_ids " + std::to_string(n));
  if (f.positions.size() != n) throw Error("shape mismatch: positions has " + std::to_string(f.positions.size()) + " entries, token_ids " + std::to_string(n));
  const Index d = c.word_dim;
  MatrixXd x(c.encoder_input(), static_cast<Index>(n));
  for (std::size_t j = 0; j < n; ++j) {
    const int id = f.token_ids[j];
    if (id < 0 || id >= p.embedding.cols()) throw Error("token id " + std::to_string(id) + " outside embedding of " + std::to_string(p.embedding.cols()) + " columns");
    const auto col = static_cast<Index>(j);
    x.col(col).head(d) = p.embedding.col(id);
    if (c.encoder_mode == EncoderMode::kDifficulty) {
      const int tag = f.pos_ids[j];
      if (tag < 0 || tag >= c.pos_tags) throw Error("POS id " + std::to_string(tag) + " outside tagset of " + std::to_string(c.pos_tags));
      x.col(col).segment(d, d) = positional_encoding(f.positions[j], c.word_dim);
      x.col(col).tail(c.pos_tags).setZero();
      x(2 * d + tag, col) = 1.0;
    }
  }
  return x;
}

void encode(const FeaturizedUtterance& f, const ModelParams& p, const ModelConfig& c, UtteranceTrace& tr) {
  const Index k = c.hidden;
  tr.x = encoder_input(f, p, c);
  const Index n = tr.x.cols();
  tr.fw = lstm_forward(p.word_fw, tr.x, false);
  tr.bw = lstm_forward(p.word_bw, tr.x, true);
  tr.o.resize(2 * k, n);
  tr.o.topRows(k) = tr.fw.hidden;
  tr.o.bottomRows(k) = tr.bw.hidden;

  tr.v = VectorXd::Zero(c.utterance_dim());
  tr.v.head(k) = tr.fw.hidden.col(n - 1);
  tr.v.segment(k, k) = tr.bw.hidden.col(0);

  const std::vector<bool> all(static_cast<std::size_t>(n), true);
  if (c.encoder_mode == EncoderMode::kDifficulty) {
    tr.role = static_cast<double>(f.role);
    tr.w_mix = tr.role * p.attn_w_customer + (1.0 - tr.role) * p.attn_w_agent;
    tr.b_mix = tr.role * p.attn_b_customer + (1.0 - tr.role) * p.attn_b_agent;
    tr.g_mix = tr.role * p.attn_g_customer + (1.0 - tr.role) * p.attn_g_agent;
    MatrixXd pre = tr.w_mix * tr.x;
    pre.colwise() += tr.b_mix;
    tr.g = pre.array().tanh();
    tr.scale.resize(n);
    for (Index j = 0; j < n; ++j) tr.scale(j) = 1.0 - f.term_freqs[static_cast<std::size_t>(j)];
    const VectorXd logits = tr.scale.cwiseProduct(tr.g.transpose() * tr.g_mix);
    tr.alpha = masked_softmax(logits, all);
    tr.v.segment(2 * k, 2 * k) = tr.o * tr.alpha;
  } else if (c.encoder_mode == EncoderMode::kBiRnnSelfAttention) {
    MatrixXd pre = p.self_attn_w * tr.o;
    pre.colwise() += p.self_attn_b;
    tr.g = pre.array().tanh();
    tr.alpha = masked_softmax(tr.g.transpose() * p.self_attn_g, all);
    tr.v.segment(2 * k, 2 * k) = tr.o * tr.alpha;
  }
  if (c.use_emotion) tr.v(4 * k) = f.emotion;
  check_finite(tr.v, "utterance encoder");
}

void encode_backward(const FeaturizedUtterance& f, const ModelParams& p, const ModelConfig& c, const UtteranceTrace& tr,
                     const VectorXd& dv, ModelParams& grad) {
  const Index k = c.hidden;
  const Index n = tr.x.cols();
  MatrixXd d_o = MatrixXd::Zero(2 * k, n);
  d_o.col(n - 1).head(k) += dv.head(k);
  d_o.col(0).tail(k) += dv.segment(k, k);
  MatrixXd dx = MatrixXd::Zero(tr.x.rows(), n);

  if (c.encoder_mode != EncoderMode::kPlainBiRnn) {
    const VectorXd da = dv.segment(2 * k, 2 * k);
    d_o.noalias() += da * tr.alpha.transpose();
    const VectorXd d_alpha = tr.o.transpose() * da;
    const VectorXd d_logits = tr.alpha.cwiseProduct((d_alpha.array() - tr.alpha.dot(d_alpha)).matrix());
    if (c.encoder_mode == EncoderMode::kDifficulty) {
      const VectorXd d_score = d_logits.cwiseProduct(tr.scale);
      const MatrixXd d_g = tr.g_mix * d_score.transpose();
      const VectorXd d_gmix = tr.g * d_score;
      const MatrixXd d_pre = d_g.array() * (1.0 - tr.g.array().square());
      const MatrixXd d_w = d_pre * tr.x.transpose();
      const VectorXd d_b = d_pre.rowwise().sum();
      dx.noalias() += tr.w_mix.transpose() * d_pre;
      const double r = tr.role;
      if (r != 0.0) {
        grad.attn_w_customer += r * d_w;
        grad.attn_b_customer += r * d_b;
        grad.attn_g_customer += r * d_gmix;
      }
      if (r != 1.0) {
        grad.attn_w_agent += (1.0 - r) * d_w;
        grad.attn_b_agent += (1.0 - r) * d_b;
        grad.attn_g_agent += (1.0 - r) * d_gmix;
      }
    } else {
      const MatrixXd d_g = p.self_attn_g * d_logits.transpose();
      grad.self_attn_g += tr.g * d_logits;
      const MatrixXd d_pre = d_g.array() * (1.0 - tr.g.array().square());
      grad.self_attn_w.noalias() += d_pre * tr.o.transpose();
      grad.self_attn_b += d_pre.rowwise().sum();
      d_o.noalias() += p.self_attn_w.transpose() * d_pre;
    }
  }

  dx += lstm_backward(p.word_fw, tr.x, tr.fw, d_o.topRows(k), grad.word_fw);
  dx += lstm_backward(p.word_bw, tr.x, tr.bw, d_o.bottomRows(k), grad.word_bw);
  const Index d = c.word_dim;
  for (Index j = 0; j < n; ++j) grad.embedding.col(f.token_ids[static_cast<std::size_t>(j)]) += dx.col(j).head(d);
}

struct DialogueTrace {
  std::vector<UtteranceTrace> utts;
  MatrixXd matching;
  MatrixXd fused_in, fused_pre, fused_mask, fused;
  LstmTrace ctx;
  std::vector<VectorXd> ctx_alpha;  // full length L, zero beyond t-1
  MatrixXd proj_in, proj_pre, proj_mask, proj;
  MatrixXd probs;
};

void forward(std::span<const FeaturizedUtterance> utts, const ModelParams& p, const ModelConfig& c,
             const ForwardOptions& opt, DialogueTrace& tr) {
  const auto L = static_cast<Index>(utts.size());
  if (L < 1) throw Error("dialogue has no utterances");
  if (L > c.max_dialogue_length) {
    throw Error("dialogue of " + std::to_string(L) + " utterances exceeds max_dialogue_length " +
                std::to_string(c.max_dialogue_length) + "; split the dialogue or raise the limit");
  }
  const Index k = c.hidden, K = c.utterance_dim(), width = c.max_dialogue_length;

  tr.utts.resize(static_cast<std::size_t>(L));
  std::vector<VectorXd> vs(static_cast<std::size_t>(L));
  for (Index t = 0; t < L; ++t) {
    encode(utts[static_cast<std::size_t>(t)], p, c, tr.utts[static_cast<std::size_t>(t)]);
    vs[static_cast<std::size_t>(t)] = tr.utts[static_cast<std::size_t>(t)].v;
  }
  tr.matching = matching_features(vs, c);

  tr.fused_in = MatrixXd::Zero(width + K, L);
  for (Index t = 0; t < L; ++t) {
    if (c.use_matching) tr.fused_in.col(t).head(L) = tr.matching.row(t).transpose();
    tr.fused_in.col(t).tail(K) = vs[static_cast<std::size_t>(t)];
  }
  tr.fused_pre = p.fusion_w * tr.fused_in;
  tr.fused_pre.colwise() += p.fusion_b;
  tr.fused_mask = dropout_mask(k, L, c.dropout, opt);
  tr.fused = tr.fused_pre.cwiseMax(0.0).cwiseProduct(tr.fused_mask);
  check_finite(tr.fused, "matching fusion");

  tr.ctx = lstm_forward(p.context, tr.fused, false);
  const MatrixXd& H = tr.ctx.hidden;
  check_finite(H, "context lstm");

  tr.ctx_alpha.assign(static_cast<std::size_t>(L), VectorXd::Zero(L));
  tr.proj_in.resize(2 * k, L);
  tr.proj_in.topRows(k) = H;
  for (Index t = 0; t < L; ++t) {
    if (t == 0) {
      tr.proj_in.col(0).tail(k).setZero();
      continue;
    }
    const VectorXd q = p.context_attn_w.transpose() * H.col(t);
    const VectorXd scores = H.transpose() * q;
    std::vector<bool> mask(static_cast<std::size_t>(L), false);
    std::fill_n(mask.begin(), t, true);
    auto& alpha = tr.ctx_alpha[static_cast<std::size_t>(t)];
    alpha = masked_softmax(scores, mask);
    tr.proj_in.col(t).tail(k) = H * alpha;
  }
  check_finite(tr.proj_in, "context attention");

  tr.proj_pre = p.proj_w * tr.proj_in;
  tr.proj_pre.colwise() += p.proj_b;
  tr.proj_mask = dropout_mask(k, L, c.dropout, opt);
  tr.proj = tr.proj_pre.cwiseMax(0.0).cwiseProduct(tr.proj_mask);

  tr.probs.resize(2, L);
  for (Index t = 0; t < L; ++t) {
    const Eigen::Vector2d z = p.cls_w * tr.proj.col(t) + p.cls_b;
    tr.probs.col(t) = softmax2(z);
  }
  check_finite(tr.probs, "classifier");
}

void backward(std::span<const FeaturizedUtterance> utts, std::span<const int> labels, const ModelParams& p,
              const ModelConfig& c, const DialogueTrace& tr, ModelParams& grad) {
  const auto L = static_cast<Index>(utts.size());
  const Index k = c.hidden, K = c.utterance_dim();

  MatrixXd d_logits = tr.probs;
  for (Index t = 0; t < L; ++t) {
    const int y = labels[static_cast<std::size_t>(t)];
    if (tr.probs(y, t) < kProbabilityFloor) {
      d_logits.col(t).setZero();
    } else {
      d_logits(y, t) -= 1.0;
    }
  }
  grad.cls_w.noalias() += d_logits * tr.proj.transpose();
  grad.cls_b += d_logits.rowwise().sum();
  MatrixXd d_proj = p.cls_w.transpose() * d_logits;
  d_proj = d_proj.cwiseProduct(tr.proj_mask).cwiseProduct((tr.proj_pre.array() > 0.0).cast<double>().matrix());
  grad.proj_w.noalias() += d_proj * tr.proj_in.transpose();
  grad.proj_b += d_proj.rowwise().sum();
  const MatrixXd d_proj_in = p.proj_w.transpose() * d_proj;

  const MatrixXd& H = tr.ctx.hidden;
  MatrixXd dH = d_proj_in.topRows(k);
  for (Index t = 1; t < L; ++t) {
    const VectorXd& alpha = tr.ctx_alpha[static_cast<std::size_t>(t)];
    const VectorXd dc = d_proj_in.col(t).tail(k);
    const VectorXd d_alpha = (H.leftCols(t).transpose() * dc);
    dH.leftCols(t).noalias() += dc * alpha.head(t).transpose();
    const VectorXd a = alpha.head(t);
    const VectorXd d_score = a.cwiseProduct((d_alpha.array() - a.dot(d_alpha)).matrix());
    const VectorXd q = p.context_attn_w.transpose() * H.col(t);
    const VectorXd dq = H.leftCols(t) * d_score;
    dH.leftCols(t).noalias() += q * d_score.transpose();
    dH.col(t).noalias() += p.context_attn_w * dq;
    grad.context_attn_w.noalias() += H.col(t) * dq.transpose();
  }

  MatrixXd d_fused = lstm_backward(p.context, tr.fused, tr.ctx, dH, grad.context);
  d_fused = d_fused.cwiseProduct(tr.fused_mask).cwiseProduct((tr.fused_pre.array() > 0.0).cast<double>().matrix());
  grad.fusion_w.noalias() += d_fused * tr.fused_in.transpose();
  grad.fusion_b += d_fused.rowwise().sum();
  const MatrixXd d_in = p.fusion_w.transpose() * d_fused;

  MatrixXd dV = d_in.bottomRows(K);
  if (c.use_matching) {
    for (Index t = 1; t < L; ++t) {
      const VectorXd& vt = tr.utts[static_cast<std::size_t>(t)].v;
      for (Index j = 0; j < t; ++j) {
        const double dm = d_in(j, t);
        dV.col(t) += dm * tr.utts[static_cast<std::size_t>(j)].v;
        dV.col(j) += dm * vt;
      }
    }
  }
  for (Index t = 0; t < L; ++t) {
    encode_backward(utts[static_cast<std::size_t>(t)], p, c, tr.utts[static_cast<std::size_t>(t)], dV.col(t), grad);
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Public entry points

UtteranceEncoding encode_utterance(const FeaturizedUtterance& feat, const ModelParams& params, const ModelConfig& config) {
  UtteranceTrace tr;
  encode(feat, params, config, tr);
  return {tr.v, tr.alpha};
}

DialogueOutput forward_dialogue(std::span<const FeaturizedUtterance> utterances, const ModelParams& params,
                                const ModelConfig& config, const ForwardOptions& options) {
  DialogueTrace tr;
  forward(utterances, params, config, options, tr);
  DialogueOutput out;
  const auto L = static_cast<Index>(utterances.size());
  out.probs.reserve(static_cast<std::size_t>(L));
  for (Index t = 0; t < L; ++t) out.probs.emplace_back(tr.probs.col(t));
  for (auto& u : tr.utts) out.encodings.push_back({std::move(u.v), std::move(u.alpha)});
  out.matching = std::move(tr.matching);
  for (Index t = 0; t < L; ++t) {
    out.context_attention.push_back(tr.ctx_alpha[static_cast<std::size_t>(t)].head(t));
    out.context.push_back(tr.proj_in.col(t).tail(config.hidden));
  }
  return out;
}

double dialogue_loss(const FeaturizedDialogue& dialogue, const ModelParams& params, const ModelConfig& config,
                     ModelParams* grad, const ForwardOptions& options) {
  if (dialogue.labels.size() != dialogue.utterances.size()) {
    throw Error("session " + dialogue.session_id + ": " + std::to_string(dialogue.labels.size()) + " labels for " +
                std::to_string(dialogue.utterances.size()) + " utterances");
  }
  for (int y : dialogue.labels) {
    if (y != 0 && y != 1) throw Error("session " + dialogue.session_id + ": labels must be 0 or 1");
  }
  DialogueTrace tr;
  forward(dialogue.utterances, params, config, options, tr);
  double loss = 0.0;
  for (std::size_t t = 0; t < dialogue.labels.size(); ++t) {
    loss -= std::log(std::max(tr.probs(dialogue.labels[t], static_cast<Index>(t)), kProbabilityFloor));
  }
  if (grad != nullptr) backward(dialogue.utterances, dialogue.labels, params, config, tr, *grad);
  return loss;
}

}  // namespace dami
