#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "dami/featurize.hpp"
#include "dami/lstm.hpp"
#include "dami/rng.hpp"

namespace dami {

enum class EncoderMode : std::uint8_t {
  /// BiLSTM over word, positional and POS features with role-conditioned,
  /// term-frequency-scaled token attention.
  kDifficulty = 0,
  /// BiLSTM over word embeddings only; the attention slot of v_t is zero.
  kPlainBiRnn = 1,
  /// BiLSTM over word embeddings with a role-agnostic self-attention.
  kBiRnnSelfAttention = 2,
};

std::string_view to_string(EncoderMode mode);
EncoderMode parse_encoder_mode(std::string_view text);

struct ModelConfig {
  int vocab_size = 2;
  /// Word embedding dimension d; also the positional encoding width.
  int word_dim = 200;
  /// Number of POS categories n.
  int pos_tags = 10;
  /// Recurrent hidden units k.
  int hidden = 128;
  /// Attention units z.
  int attention = 128;
  /// Width of the zero-padded matching feature row.
  int max_dialogue_length = 64;
  /// Drop probability applied to the fused and context-aware vectors.
  double dropout = 0.25;
  bool use_emotion = true;
  bool use_matching = true;
  EncoderMode encoder_mode = EncoderMode::kDifficulty;

  /// Row dimension of the token feature matrix fed to the utterance BiLSTM.
  int encoder_input() const { return encoder_mode == EncoderMode::kDifficulty ? 2 * word_dim + pos_tags : word_dim; }
  /// K = 4k + 1.
  int utterance_dim() const { return 4 * hidden + 1; }
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// All trainable tensors. Also used as the gradient accumulator.
struct ModelParams {
  Eigen::MatrixXd embedding;  // d x |V|
  LstmWeights word_fw;
  LstmWeights word_bw;
  Eigen::MatrixXd attn_w_customer, attn_w_agent;  // z x (2d+n)
  Eigen::VectorXd attn_b_customer, attn_b_agent;  // z
  Eigen::VectorXd attn_g_customer, attn_g_agent;  // z
  Eigen::MatrixXd self_attn_w;                    // z x 2k, self-attention encoder only
  Eigen::VectorXd self_attn_b, self_attn_g;       // z
  Eigen::MatrixXd fusion_w;                       // k x (K + L_max)
  Eigen::VectorXd fusion_b;
  LstmWeights context;
  Eigen::MatrixXd context_attn_w;  // k x k
  Eigen::MatrixXd proj_w;          // k x 2k
  Eigen::VectorXd proj_b;
  Eigen::MatrixXd cls_w;  // 2 x k
  Eigen::VectorXd cls_b;

  /// Zero tensors of the shapes `config` implies.
  static ModelParams zeros(const ModelConfig& config);

  /// Calls fn(name, rows, cols, data) for every tensor, empty ones included.
  template <class Fn>
  void visit(Fn&& fn);
  template <class Fn>
  void visit(Fn&& fn) const;

  void set_zero();
  std::size_t parameter_count() const;
  double squared_norm() const;
  bool all_finite() const;
  /// this += scale * other.
  void add_scaled(const ModelParams& other, double scale);
};

/// Glorot-uniform weights, zero biases, embeddings uniform in [-0.05, 0.05].
ModelParams init_params(const ModelConfig& config, std::uint64_t seed,
                        const std::optional<Eigen::MatrixXd>& pretrained_embedding = std::nullopt);

/// sqrt(6 / (fan_in + fan_out)).
double glorot_bound(Eigen::Index rows, Eigen::Index cols);

struct UtteranceEncoding {
  /// s_t (2k) ++ a_t (2k) ++ e_t.
  Eigen::VectorXd vector;
  /// Token attention weights; empty for the plain encoder.
  Eigen::VectorXd token_attention;
};

UtteranceEncoding encode_utterance(const FeaturizedUtterance& feat, const ModelParams& params, const ModelConfig& config);

/// L x L matrix whose row t holds v_t . v_j for j < t and zeros elsewhere.
Eigen::MatrixXd matching_features(std::span<const Eigen::VectorXd> vectors, const ModelConfig& config);

/// Softmax over entries whose mask is set; masked entries get weight 0.
/// All-masked input yields the zero vector.
Eigen::VectorXd masked_softmax(const Eigen::VectorXd& logits, const std::vector<bool>& mask);

struct DialogueOutput {
  /// Per utterance (p_normal, p_transferable).
  std::vector<Eigen::Vector2d> probs;
  std::vector<UtteranceEncoding> encodings;
  Eigen::MatrixXd matching;
  /// Context attention over predecessors; empty for the first utterance.
  std::vector<Eigen::VectorXd> context_attention;
  /// Context vectors c_t; zero for the first utterance.
  std::vector<Eigen::VectorXd> context;
};

struct ForwardOptions {
  bool train = false;
  /// Dropout stream; required when `train` and dropout > 0.
  Rng* rng = nullptr;
};

DialogueOutput forward_dialogue(std::span<const FeaturizedUtterance> utterances, const ModelParams& params,
                                const ModelConfig& config, const ForwardOptions& options = {});

/// Summed cross entropy -sum_t log p_t(y_t) of one dialogue. When `grad` is
/// given, its gradient is accumulated there.
double dialogue_loss(const FeaturizedDialogue& dialogue, const ModelParams& params, const ModelConfig& config,
                     ModelParams* grad = nullptr, const ForwardOptions& options = {});

/// Floor applied to the gold-class probability inside the log.
inline constexpr double kProbabilityFloor = 1e-12;

// ---------------------------------------------------------------------------

namespace detail {
template <class P, class Fn>
void visit_params(P& p, Fn&& fn) {
  auto mat = [&](std::string_view name, auto& m) { fn(name, m.rows(), m.cols(), m.data()); };
  auto lstm = [&](std::string_view prefix, auto& l) {
    const std::string base(prefix);
    mat(base + ".wx", l.wx);
    mat(base + ".wh", l.wh);
    mat(base + ".b", l.b);
  };
  mat("embedding", p.embedding);
  lstm("word_lstm_fw", p.word_fw);
  lstm("word_lstm_bw", p.word_bw);
  mat("attn_w_customer", p.attn_w_customer);
  mat("attn_w_agent", p.attn_w_agent);
  mat("attn_b_customer", p.attn_b_customer);
  mat("attn_b_agent", p.attn_b_agent);
  mat("attn_g_customer", p.attn_g_customer);
  mat("attn_g_agent", p.attn_g_agent);
  mat("self_attn_w", p.self_attn_w);
  mat("self_attn_b", p.self_attn_b);
  mat("self_attn_g", p.self_attn_g);
  mat("fusion_w", p.fusion_w);
  mat("fusion_b", p.fusion_b);
  lstm("context_lstm", p.context);
  mat("context_attn_w", p.context_attn_w);
  mat("proj_w", p.proj_w);
  mat("proj_b", p.proj_b);
  mat("cls_w", p.cls_w);
  mat("cls_b", p.cls_b);
}
}  // namespace detail

template <class Fn>
void ModelParams::visit(Fn&& fn) {
  detail::visit_params(*this, fn);
}

template <class Fn>
void ModelParams::visit(Fn&& fn) const {
  detail::visit_params(*this, fn);
}

}  // namespace dami
