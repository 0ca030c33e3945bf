#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "mate/error.hpp"
#include "mate/geometry.hpp"
#include "mate/rng.hpp"

namespace mate::net {

using Mat = Eigen::MatrixXd;

// Handle to a node on a Tape. Plain value type; only meaningful together
// with the tape that produced it.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Dynamic reverse-mode tape. Nodes are created in topological order by the
// op functions below; backward() walks them in reverse creation order.
// Scalars are 1x1 matrices. The tape is single-threaded; run concurrent
// work on separate tapes.
class Tape {
 public:
  Var constant(Mat value) { return push(std::move(value), false, {}); }
  Var leaf(Mat value) { return push(std::move(value), true, {}); }

  const Mat& value(Var v) const { return nodes_[check(v)].value; }

  // Gradient accumulated by the last backward(); zero matrix if the node
  // was never touched.
  Mat grad(Var v) const {
    const auto& n = nodes_[check(v)];
    if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  double scalar(Var v) const {
    const Mat& m = value(v);
    if (m.rows() != 1 || m.cols() != 1) {
      throw Error(ErrorCode::ShapeMismatch, "scalar() on a non 1x1 node");
    }
    return m(0, 0);
  }

  void backward(Var loss);

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

  // --- used by op implementations ---
  Var push(Mat value, bool requires_grad, std::function<void(Tape&)> fn = {}) {
    nodes_.push_back(Node{std::move(value), Mat(), std::move(fn), requires_grad});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }
  void set_backward(Var v, std::function<void(Tape&)> fn) {
    nodes_[check(v)].backward = std::move(fn);
  }
  bool requires_grad(Var v) const { return nodes_[check(v)].requires_grad; }
  bool has_grad(Var v) const { return nodes_[check(v)].grad.size() != 0; }
  const Mat& raw_grad(Var v) const { return nodes_[check(v)].grad; }
  void accumulate(Var v, const Mat& g) {
    auto& n = nodes_[check(v)];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

 private:
  struct Node {
    Mat value;
    Mat grad;
    std::function<void(Tape&)> backward;
    bool requires_grad = false;
  };

  int check(Var v) const {
    if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
      throw Error(ErrorCode::ShapeMismatch, "Var does not belong to this tape");
    }
    return v.id;
  }

  std::vector<Node> nodes_;
};

// --- primitive ops ---
Var matmul(Tape& t, Var a, Var b);
Var add(Tape& t, Var a, Var b);
Var subtract(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double s);
// a + s * b (same shape); used to combine loss terms
Var add_scaled(Tape& t, Var a, Var b, double s);
// x + row broadcast over all rows of x
Var add_row_broadcast(Tape& t, Var x, Var row);
Var relu(Tape& t, Var x);
Var gelu(Tape& t, Var x);

// Row-wise layer normalization with learned gain/bias (1 x D each).
Var layer_norm(Tape& t, Var x, Var gain, Var bias, double eps = 1e-5);

// Column-wise batch normalization. In train mode uses batch statistics and
// updates the running buffers in place (biased batch variance in the
// normalization, unbiased in the running estimate); in eval mode uses the
// running buffers. The buffers must outlive the tape.
Var batch_norm(Tape& t, Var x, Var gain, Var bias, Mat* running_mean,
               Mat* running_var, bool train, double momentum = 0.1,
               double eps = 1e-5);

// Inverted dropout; identity in eval mode. Mask entries drawn row-major.
Var dropout(Tape& t, Var x, double rate, bool train, Rng* rng);

Var gather_rows(Tape& t, Var x, std::vector<int> rows);
Var concat_cols(Tape& t, Var a, Var b);
Var concat_rows(Tape& t, Var a, Var b);

// Consecutive groups of `group_size` rows pooled to one row each.
// Max ties resolve to the first (lowest) row.
Var group_max_pool(Tape& t, Var x, int group_size);
Var group_mean_pool(Tape& t, Var x, int group_size);

// Multi-head scaled dot-product self-attention over uniform blocks:
// q, k, v are (B*S) x D with B independent blocks of S rows; attention is
// computed within each block, per head.
Var block_self_attention(Tape& t, Var q, Var k, Var v, int block_size, int num_heads);

// (R x 3k) rows of packed xyz triples -> (R*k x 3) points.
Var rows_to_points(Tape& t, Var x, int points_per_row);

// Scalar sum of x .* weights; weights are a plain constant.
Var weighted_sum(Tape& t, Var x, Mat weights);

// Mean cross-entropy over rows of logits (B x C) against integer labels.
Var cross_entropy_mean(Tape& t, Var logits, const std::vector<int>& labels);

// Mean over tokens of the symmetric squared-L2 Chamfer distance between
// predicted points (token i owns rows [i*k, (i+1)*k)) and its fixed target
// patch. Differentiable in the predictions; targets are constants.
Var chamfer_token_loss(Tape& t, Var pred_points,
                       const std::vector<std::vector<geom::Vec3>>& target_patches);

// --- composites ---
inline Var linear(Tape& t, Var x, Var w, Var b) {
  return add_row_broadcast(t, matmul(t, x, w), b);
}

}  // namespace mate::net
