#pragma once

// Reverse-mode autodiff over dense matrices. A Tape owns the computation
// graph; Value is a cheap handle into it. All losses and the differentiable
// dual-bound propagation are built from the primitives below.

#include <Eigen/Dense>
#include <array>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

namespace reachsense {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

namespace ad {

class Tape;

struct Value {
  Tape* tape = nullptr;
  int idx = -1;

  bool valid() const { return tape != nullptr && idx >= 0; }
  const Mat& val() const;
  const Mat& grad() const;
  int rows() const { return (int)val().rows(); }
  int cols() const { return (int)val().cols(); }
  double scalar() const;
};

class Tape {
 public:
  Value node(Mat value);
  Value constant(Mat value) { return node(std::move(value)); }
  Value variable(Mat value) { return node(std::move(value)); }

  // Runs reverse sweep from a 1x1 root. Gradients accumulate into each
  // node's grad matrix; call grads() afterwards on the variables of interest.
  void backward(const Value& root);

  const Mat& value_of(int idx) const { return nodes_[idx]->val; }
  const Mat& grad_of(int idx) const { return nodes_[idx]->grad; }
  Mat& grad_ref(int idx) { return nodes_[idx]->grad; }
  size_t size() const { return nodes_.size(); }

  void set_backfn(int idx, std::function<void()> fn) {
    nodes_[idx]->back = std::move(fn);
  }

 private:
  struct Node {
    Mat val;
    Mat grad;  // zero-initialized lazily by backward()
    std::function<void()> back;
  };
  std::vector<std::unique_ptr<Node>> nodes_;
};

// -- primitives ------------------------------------------------------------

Value matmul(Value a, Value b);
Value add(Value a, Value b);
Value sub(Value a, Value b);
Value neg(Value a);
Value transpose(Value a);
Value cwise_mul(Value a, Value b);
Value cwise_div(Value a, Value b);
Value cmul_const(Value a, const Mat& m);      // elementwise a .* m, m constant
Value cadd_const(Value a, const Mat& m);      // a + m, m constant
Value colwise_add(Value a, Value v);          // add column vector v to every column
Value colwise_mul(Value a, Value v);          // scale row i of a by v(i)
Value relu(Value a);                          // subgradient at 0 is 0
Value abs(Value a);                           // subgradient at 0 is 0
Value log_shift(Value a, double delta);       // log(a + delta), elementwise
Value exp(Value a);
Value scale(Value a, double s);
Value sum(Value a);                           // -> 1x1
Value sum_sq(Value a);                        // -> 1x1, sum of squares
// Mean softmax cross-entropy over columns of an m x B logit matrix.
Value softmax_cross_entropy(Value logits, const std::vector<int>& labels);
// Builds a dense lowered matrix from flat parameters via an index map:
// out(r,c) = sum of params(k) over all triples (r,c,k). Backward scatters.
struct LoweringMap {
  int out_rows = 0, out_cols = 0;
  std::vector<std::array<int, 3>> triples;  // (row, col, param index)
};
Value lower_params(Value params, const LoweringMap& map);

}  // namespace ad
}  // namespace reachsense
