#pragma once

#include <Eigen/Core>

namespace dami {

/// Standard LSTM cell weights; gate blocks are stacked as input, forget,
/// candidate, output.
struct LstmWeights {
  Eigen::MatrixXd wx;  // 4k x input
  Eigen::MatrixXd wh;  // 4k x k
  Eigen::VectorXd b;   // 4k

  LstmWeights() = default;
  LstmWeights(Eigen::Index input, Eigen::Index hidden)
      : wx(Eigen::MatrixXd::Zero(4 * hidden, input)),
        wh(Eigen::MatrixXd::Zero(4 * hidden, hidden)),
        b(Eigen::VectorXd::Zero(4 * hidden)) {}

  Eigen::Index hidden() const { return wh.cols(); }
  Eigen::Index input() const { return wx.cols(); }
};

/// Activations of one pass, columns in time order regardless of direction.
struct LstmTrace {
  Eigen::MatrixXd gates;   // 4k x n, post-activation
  Eigen::MatrixXd cell;    // k x n
  Eigen::MatrixXd tanh_cell;
  Eigen::MatrixXd hidden;  // k x n
  bool reverse = false;
};

/// Runs the cell over the columns of `x`, right to left when `reverse`.
LstmTrace lstm_forward(const LstmWeights& w, const Eigen::MatrixXd& x, bool reverse);

/// Back-propagates external gradients `d_hidden` (k x n) through the pass.
/// Accumulates into `grad` and returns the gradient w.r.t. `x`.
Eigen::MatrixXd lstm_backward(const LstmWeights& w, const Eigen::MatrixXd& x, const LstmTrace& trace,
                              const Eigen::MatrixXd& d_hidden, LstmWeights& grad);

}  // namespace dami
