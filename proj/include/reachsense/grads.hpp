#pragma once

// Gradient plumbing: a Network's parameters mirrored as tape variables, the
// fused affine stack built on the tape (so the dual bound is differentiable
// with the exact same code the verifier runs), loss-gradient evaluation, a
// central-difference checker, and the exact input Jacobian.

#include <functional>

#include "reachsense/bounds_core.hpp"
#include "reachsense/net.hpp"

namespace reachsense {

struct Batch {
  Mat X;                   // samples as columns
  std::vector<int> y;      // one label per column
  int size() const { return (int)X.cols(); }
};

// Per weighted layer, in the raw parameterization: affine layers get dW with
// the matrix shape and db with the bias shape; conv layers get the flat
// kernel gradient as an n x 1 dW and the per-channel bias gradient as db.
struct Gradients {
  std::vector<Mat> dW;
  std::vector<Vec> db;

  Vec flatten() const;  // same order as flatten_weights()
  double inf_norm() const;
  bool finite() const;
};

struct AdNet {
  ad::Tape* tape = nullptr;
  const Network* net = nullptr;
  std::vector<ad::Value> pW, pb;  // raw per-weighted-layer parameter variables
  StackT<ad::Value> stack;        // lowered conv + fused affine runs, on the tape

  static AdNet build(ad::Tape& tape, const Network& net);
  Gradients read_grads() const;
};

// Logits graph over the columns of X. Reports the weighted-layer index if a
// non-finite intermediate shows up.
ad::Value forward_graph(const AdNet& an, const Mat& X);

using LossGraphFn = std::function<ad::Value(ad::Tape&, AdNet&, const Batch&)>;

struct LossAndGrad {
  double value = 0.0;
  Gradients grads;
};

LossAndGrad gradient(const LossGraphFn& fn, const Network& net, const Batch& batch);

// Max over all parameters of |analytic - central| / (|analytic| + |central| + 1e-12).
double finite_diff_check(const LossGraphFn& fn, const Network& net, const Batch& batch,
                         double h = 1e-5);

// d f / d x at x: the product of weight matrices through the active-ReLU
// masks (gate is 0 exactly at 0, matching the autodiff subgradient).
Mat input_jacobian(const Network& net, const Vec& x);

}  // namespace reachsense
