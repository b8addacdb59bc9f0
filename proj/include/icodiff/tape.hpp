#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

// Minimal reverse-mode differentiation over channel x vertex matrices.
//
// Every op appends a node holding its value and, when recording, a closure
// that pushes the node's gradient into its inputs. Tape::backward walks the
// nodes in reverse creation order, so accumulation order is fixed for a
// given graph.
namespace icodiff::nn {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}

  bool recording() const noexcept { return record_; }

  Var constant(Mat value) { return push(std::move(value), false, {}); }
  Var parameter(Mat value) { return push(std::move(value), record_, {}); }

  const Mat& value(Var v) const { return nodes_[v.id].value; }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }

  // Gradient of the last backward() target; zeros if nothing reached v.
  Mat grad(Var v) const;

  // Adds g into v's gradient (allocating it on first use).
  void accumulate(Var v, const Mat& g);

  // Seeds d(out)/d(out) = 1 for a 1x1 output and runs all closures.
  void backward(Var out);

  using Backward = std::function<void(Tape&, const Mat& grad_out)>;
  Var push(Mat value, bool needs_grad, Backward back);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool needs_grad = false;
    Backward back;
  };
  bool record_;
  std::vector<Node> nodes_;
};

// out = W * gather(x) + b. `table` holds 7 entries per vertex (see
// IcosphereMesh::neighbors); tap 0 is the vertex itself and taps 1..6 are
// table entries 0..5. W is out x (in*7), column i*7+k for input i, tap k.
Var ring_conv(Tape& t, Var x, Var w, Var b, std::span<const std::uint32_t> table);

// Per-vertex channel mixing: W (out x in) * x + b.
Var channel_linear(Tape& t, Var x, Var w, Var b);
Var channel_linear(Tape& t, Var x, Var w);

Var add(Tape& t, Var a, Var b);
// x + b broadcast over columns; b is C x 1.
Var add_bias(Tape& t, Var x, Var b);
Var scale(Tape& t, Var x, double s);
Var silu(Tape& t, Var x);
Var group_norm(Tape& t, Var x, Var gamma, Var beta, int groups, double eps = 1e-5);
Var concat_rows(Tape& t, Var a, Var b);
// Keeps the first `keep` columns.
Var slice_columns(Tape& t, Var x, std::size_t keep);
// Zero-extends to `total` columns.
Var pad_columns(Tape& t, Var x, std::size_t total);
Var select_column(Tape& t, Var x, std::size_t col);
// Single-head softmax attention over columns: out = v * softmax(q^T k / sqrt(C))^T.
Var attention(Tape& t, Var q, Var k, Var v);
// Mean squared error against a constant target, as a 1x1 node.
Var mse(Tape& t, Var pred, const Mat& target);

}  // namespace icodiff::nn
