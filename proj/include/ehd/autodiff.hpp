#pragma once

// Minimal reverse-mode autodiff over dense Eigen matrices.
//
// Graphs are built dynamically: every op returns a fresh Node holding its
// value and a closure that scatters the incoming gradient to its parents.
// The sequence axis is always the row axis; feature axes are columns.
// Scalars are 1x1 matrices.

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace ehd::ad {

using Mat = Eigen::MatrixXd;

class Node;
using Value = std::shared_ptr<Node>;

class Node {
 public:
  Mat val;
  Mat grad;  // same shape as val once a backward pass has run
  bool requires_grad = false;
  std::vector<Value> parents;
  std::function<void(Node&)> backprop;  // accumulates into parents' grads

  explicit Node(Mat v, bool req = false)
      : val(std::move(v)), requires_grad(req) {
    grad = Mat::Zero(val.rows(), val.cols());
  }

  Eigen::Index rows() const { return val.rows(); }
  Eigen::Index cols() const { return val.cols(); }
  double scalar() const { return val(0, 0); }
};

// Leaf that participates in gradient computation (parameters, probes).
Value leaf(Mat v);
// Leaf excluded from gradient computation.
Value constant(Mat v);
Value constant(double v);

// Runs reverse accumulation from a 1x1 root. Gradients of all reachable
// nodes with requires_grad are accumulated; unreachable nodes stay zero.
void backward(const Value& root);

// Zeroes the gradient buffers of the given leaves.
void zero_grad(const std::vector<Value>& leaves);

[[noreturn]] void shape_error(const char* op, const Node& a, const Node& b);

// ---- primitives ------------------------------------------------------------

Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);  // elementwise
Value div(const Value& a, const Value& b);  // elementwise
Value neg(const Value& a);
Value matmul(const Value& a, const Value& b);
Value transpose(const Value& a);

Value add_scalar(const Value& a, double s);
Value mul_scalar(const Value& a, double s);

// broadcast a 1 x m row vector over every row of a
Value add_rowvec(const Value& a, const Value& rv);
// broadcast an n x 1 column vector over every column of a
Value mul_colvec(const Value& a, const Value& cv);

Value exp(const Value& a);
Value log(const Value& a);  // rejects non-positive entries
// log(max(a, floor)); zero gradient where clamped
Value log_clamped(const Value& a, double floor = 1e-300);
Value softplus(const Value& a);
Value sigmoid(const Value& a);
Value tanh(const Value& a);
Value relu(const Value& a);

// softmax / log-softmax over the last axis (per row)
Value softmax_rows(const Value& a);
Value log_softmax_rows(const Value& a);

// per-row normalization over columns: (x - mean) / sqrt(var + eps)
Value layer_norm_rows(const Value& a, double eps = 1e-6);

// cumulative sum along the sequence (row) axis
Value cumsum_rows(const Value& a);
// pairwise difference along rows with an implicit zero row prepended:
// y_0 = x_0, y_i = x_i - x_{i-1}; inverse of cumsum_rows
Value diff_rows_prepend_zero(const Value& a);

Value sum_all(const Value& a);    // -> 1x1
Value mean_all(const Value& a);   // -> 1x1
Value sum_rows(const Value& a);   // n x m -> 1 x m (sum over rows)
Value sum_cols(const Value& a);   // n x m -> n x 1 (sum over columns)
Value mean_rows(const Value& a);  // n x m -> 1 x m

// masked reductions; mask is same-shape with entries in {0,1}
Value masked_sum(const Value& a, const Value& mask);
Value masked_mean(const Value& a, const Value& mask);

Value concat_rows(const Value& a, const Value& b);
Value concat_cols(const Value& a, const Value& b);
Value slice_rows(const Value& a, Eigen::Index start, Eigen::Index len);
Value slice_cols(const Value& a, Eigen::Index start, Eigen::Index len);
Value gather_rows(const Value& a, const std::vector<Eigen::Index>& idx);

}  // namespace ehd::ad
