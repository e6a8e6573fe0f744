#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "ilm/rng.hpp"

namespace ilm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Contiguous row range of a stacked batch; sequences of different lengths are
// stacked into one matrix and attention is computed per segment.
struct Segment {
  int offset = 0;
  int len = 0;
};

struct Var {
  int index = -1;
  bool valid() const { return index >= 0; }
};

// Reverse-mode tape over dense matrices. Nodes are appended in program order
// (already topologically sorted); backward walks the tape in reverse. Every
// op checks its output for NaN/Inf and throws NonFiniteValue naming the op.
class Tape {
 public:
  Var input(Matrix value, bool requires_grad = false);

  const Matrix& value(Var v) const { return nodes_[static_cast<std::size_t>(v.index)].value; }
  Matrix& grad(Var v) { return nodes_[static_cast<std::size_t>(v.index)].grad; }
  bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.index)].requires_grad; }
  double scalar(Var v) const;

  // Seeds d(loss)/d(loss) = 1 and accumulates gradients into every node that
  // requires them. `loss` must be 1x1.
  void backward(Var loss);

  Var emit(Matrix value, bool requires_grad, std::function<void(Tape&)> back, const char* op_name);

  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::function<void(Tape&)> back;
  };
  std::vector<Node> nodes_;
};

// ---- layer catalog -------------------------------------------------------

Var matmul(Tape& t, Var a, Var b);
Var add(Tape& t, Var a, Var b);
// Broadcasts a 1xC row over every row of x.
Var add_rowvec(Tape& t, Var x, Var row);
// x*w + b with b a 1xC row; the standard affine map.
Var affine(Tape& t, Var x, Var w, Var b);
Var embedding_lookup(Tape& t, Var table, std::vector<int> rows);
// Row-wise layer normalization with learned gain/shift (1xC each).
Var layer_norm(Tape& t, Var x, Var gain, Var shift, double eps = 1e-5);
Var gelu(Tape& t, Var x);
Var relu(Tape& t, Var x);
Var softmax_rows(Tape& t, Var x);
Var log_softmax_rows(Tape& t, Var x);
// Multi-head causal self-attention core on stacked segments. q, k, v are
// (rows x dim); future positions are masked by adding -1e9 pre-softmax.
Var causal_self_attention(Tape& t, Var q, Var k, Var v, int num_heads,
                          std::vector<Segment> segments);
// Mean over rows of (logsumexp(row) - row[target]); targets one per row.
Var cross_entropy_mean(Tape& t, Var logits, std::vector<int> targets);
Var mean_all(Tape& t, Var x);
Var sum_all(Tape& t, Var x);
Var hadamard(Tape& t, Var a, Var b);
Var exp_elem(Tape& t, Var x);
Var scale(Tape& t, Var x, double c);
Var transpose(Tape& t, Var x);
Var slice_cols(Tape& t, Var x, int begin, int len);
Var gather_cols(Tape& t, Var x, std::vector<int> cols);
// Inverted dropout; draws the mask from `rng` in row-major order.
Var dropout(Tape& t, Var x, double rate, Rng& rng);

constexpr double kCausalMaskValue = -1e9;

}  // namespace ilm
