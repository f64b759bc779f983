#include "dami/lstm.hpp"

#include <cmath>

namespace dami {

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

LstmTrace lstm_forward(const LstmWeights& w, const Eigen::MatrixXd& x, bool reverse) {
  const Eigen::Index k = w.hidden();
  const Eigen::Index n = x.cols();
  LstmTrace tr;
  tr.reverse = reverse;
  tr.gates.noalias() = w.wx * x;
  tr.gates.colwise() += w.b;
  tr.cell.resize(k, n);
  tr.tanh_cell.resize(k, n);
  tr.hidden.resize(k, n);

  Eigen::VectorXd h_prev = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd c_prev = Eigen::VectorXd::Zero(k);
  for (Eigen::Index step = 0; step < n; ++step) {
    const Eigen::Index t = reverse ? n - 1 - step : step;
    auto g = tr.gates.col(t);
    g.noalias() += w.wh * h_prev;
    for (Eigen::Index r = 0; r < k; ++r) {
      g(r) = sigmoid(g(r));
      g(k + r) = sigmoid(g(k + r));
      g(2 * k + r) = std::tanh(g(2 * k + r));
      g(3 * k + r) = sigmoid(g(3 * k + r));
    }
    auto c = tr.cell.col(t);
    c = g.segment(k, k).cwiseProduct(c_prev) + g.head(k).cwiseProduct(g.segment(2 * k, k));
    tr.tanh_cell.col(t) = c.array().tanh();
    tr.hidden.col(t) = g.tail(k).cwiseProduct(tr.tanh_cell.col(t));
    h_prev = tr.hidden.col(t);
    c_prev = c;
  }
  return tr;
}

Eigen::MatrixXd lstm_backward(const LstmWeights& w, const Eigen::MatrixXd& x, const LstmTrace& tr,
                              const Eigen::MatrixXd& d_hidden, LstmWeights& grad) {
  const Eigen::Index k = w.hidden();
  const Eigen::Index n = x.cols();
  Eigen::MatrixXd d_pre(4 * k, n);
  Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd dc_next = Eigen::VectorXd::Zero(k);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(k);

  for (Eigen::Index step = n - 1; step >= 0; --step) {
    const Eigen::Index t = tr.reverse ? n - 1 - step : step;
    const bool first = step == 0;
    const Eigen::Index prev = tr.reverse ? t + 1 : t - 1;
    const Eigen::VectorXd c_prev = first ? zero : Eigen::VectorXd(tr.cell.col(prev));

    const auto g = tr.gates.col(t);
    const auto gi = g.head(k).array();
    const auto gf = g.segment(k, k).array();
    const auto gc = g.segment(2 * k, k).array();
    const auto go = g.tail(k).array();
    const auto tc = tr.tanh_cell.col(t).array();

    const Eigen::ArrayXd dh = d_hidden.col(t).array() + dh_next.array();
    const Eigen::ArrayXd dc = dc_next.array() + dh * go * (1.0 - tc.square());

    auto dp = d_pre.col(t);
    dp.head(k) = (dc * gc * gi * (1.0 - gi)).matrix();
    dp.segment(k, k) = (dc * c_prev.array() * gf * (1.0 - gf)).matrix();
    dp.segment(2 * k, k) = (dc * gi * (1.0 - gc.square())).matrix();
    dp.tail(k) = (dh * tc * go * (1.0 - go)).matrix();

    dc_next = (dc * gf).matrix();
    dh_next.noalias() = w.wh.transpose() * dp;
    if (!first) grad.wh.noalias() += dp * tr.hidden.col(prev).transpose();
  }
  grad.wx.noalias() += d_pre * x.transpose();
  grad.b += d_pre.rowwise().sum();
  return w.wx.transpose() * d_pre;
}

}  // namespace dami
