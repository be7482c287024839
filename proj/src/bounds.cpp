#include "reachsense/bounds.hpp"

#include <cmath>

namespace reachsense {

StackT<Mat> make_stack(const Network& net) {
  StackT<Mat> st;
  Mat W;
  Vec b;
  bool pending = false;
  for (int w = 0; w < net.depth(); ++w) {
    if (!pending) {
      W = net.weight(w);
      b = net.bias(w);
    } else {
      // two weighted layers with no ReLU between: fuse
      b = net.weight(w) * b + net.bias(w);
      W = net.weight(w) * W;
    }
    pending = true;
    if (net.relu_after(w) || w == net.depth() - 1) {
      st.W.push_back(W);
      st.b.push_back(Mat(b));
      pending = false;
    }
  }
  return st;
}

PerturbationSpec PerturbationSpec::from_sigma(const Vec& d_hat, double sigma) {
  if (sigma < 0) throw std::invalid_argument("sigma must be >= 0");
  PerturbationSpec s;
  s.sigma = sigma;
  s.eps_v = sigma * d_hat;
  return s;
}

PerturbationSpec PerturbationSpec::uniform(int n, double eps) {
  if (eps < 0) throw std::invalid_argument("eps must be >= 0");
  PerturbationSpec s;
  s.eps_v = Vec::Constant(n, eps);
  return s;
}

void PerturbationSpec::validate(int input_dim) const {
  if (eps_v.size() != input_dim) throw std::invalid_argument("perturbation spec dimension mismatch");
  if ((eps_v.array() < 0).any()) throw std::invalid_argument("perturbation bounds must be >= 0");
}

std::vector<std::pair<int, int>> PreactBounds::unstable() const {
  std::vector<std::pair<int, int>> out;
  for (int k = 0; k + 1 < (int)lower.size(); ++k)
    for (long j = 0; j < lower[(size_t)k].size(); ++j)
      if (lower[(size_t)k](j) < 0.0 && upper[(size_t)k](j) > 0.0) out.emplace_back(k, (int)j);
  return out;
}

bool PreactBounds::contains_trace(const std::vector<Vec>& pre, double tol) const {
  if (pre.size() < lower.size()) return false;
  for (size_t k = 0; k < lower.size(); ++k)
    if (((pre[k] - lower[k]).minCoeff() < -tol) || ((upper[k] - pre[k]).minCoeff() < -tol))
      return false;
  return true;
}

bool BoundsBox::contains(const Vec& y, double tol) const {
  return (y - y_min).minCoeff() >= -tol && (y_max - y).minCoeff() >= -tol;
}

bool BoundsBox::nested(const BoundsBox& inner, const BoundsBox& outer, double tol) {
  return (inner.y_min - outer.y_min).minCoeff() >= -tol &&
         (outer.y_max - inner.y_max).minCoeff() >= -tol;
}

namespace {

PreactBounds to_preact(const std::vector<Mat>& lb, const std::vector<Mat>& ub) {
  PreactBounds pb;
  for (size_t i = 0; i < lb.size(); ++i) {
    pb.lower.emplace_back(lb[i].col(0));
    pb.upper.emplace_back(ub[i].col(0));
  }
  return pb;
}

void from_preact(const PreactBounds& pb, std::vector<Mat>& lb, std::vector<Mat>& ub) {
  lb.clear();
  ub.clear();
  for (size_t i = 0; i < pb.lower.size(); ++i) {
    lb.emplace_back(Mat(pb.lower[i]));
    ub.emplace_back(Mat(pb.upper[i]));
  }
}

}  // namespace

PreactBounds preactivation_bounds(const Network& net, const Vec& x, const PerturbationSpec& spec,
                                  const ActOverride* overrides) {
  spec.validate(net.input_dim());
  if (x.size() != net.input_dim()) throw std::invalid_argument("preactivation_bounds: dim mismatch");
  StackT<Mat> st = make_stack(net);
  EigenCtx ctx;
  std::vector<Mat> lb, ub;
  compute_bounds(ctx, st, Mat(x), spec.eps_v, lb, ub, overrides);
  return to_preact(lb, ub);
}

Vec dual_objective(const Network& net, const Vec& x, const Mat& C, const PerturbationSpec& spec,
                   const PreactBounds& pb, DualState* state) {
  spec.validate(net.input_dim());
  StackT<Mat> st = make_stack(net);
  if ((int)pb.lower.size() != st.layers())
    throw std::invalid_argument("dual_objective: bounds missing or from another network");
  if (C.cols() != net.output_dim()) throw std::invalid_argument("dual_objective: C column mismatch");
  std::vector<Mat> lb, ub;
  from_preact(pb, lb, ub);
  EigenCtx ctx;
  std::vector<Mat> nu;
  Mat J = dual_lower(ctx, st, st.layers(), Mat(x), spec.eps_v, Mat(C.transpose()), lb, ub, nullptr,
                     state ? &nu : nullptr);
  if (state) {
    state->nu = std::move(nu);
    state->bounds = pb;
    state->C = C;
  }
  return J.col(0);
}

BoundsBox output_box_dual(const Network& net, const Vec& x, const PerturbationSpec& spec) {
  PreactBounds pb = preactivation_bounds(net, x, spec);
  BoundsBox box;
  box.method = BoundsBox::Method::Dual;
  box.eps_v = spec.eps_v;
  box.y_min = pb.lower.back();
  box.y_max = pb.upper.back();
  return box;
}

double sensitivity(const Network& net, const Vec& x, const PerturbationSpec& spec) {
  return output_box_dual(net, x, spec).volume();
}

double log_sensitivity(const Network& net, const Vec& x, const PerturbationSpec& spec, double delta) {
  if (delta <= 0) throw std::invalid_argument("log_sensitivity: delta must be > 0");
  Vec w = output_box_dual(net, x, spec).widths();
  return (w.array() + delta).log().sum();
}

Vec worst_case_logits(const Network& net, const Vec& x, int label, const PerturbationSpec& spec) {
  int m = net.output_dim();
  if (label < 0 || label >= m) throw std::invalid_argument("invalid label");
  Mat C = Mat::Zero(m, m);
  for (int j = 0; j < m; ++j) {
    if (j == label) continue;
    C(j, label) = 1.0;
    C(j, j) = -1.0;
  }
  PreactBounds pb = preactivation_bounds(net, x, spec);
  Vec J = dual_objective(net, x, C, spec, pb);
  Vec v = -J;
  v(label) = 0.0;
  return v;
}

double robust_loss(const Network& net, const Vec& x, int label, const PerturbationSpec& spec) {
  Vec v = worst_case_logits(net, x, label, spec);
  double mx = v.maxCoeff();
  return std::log((v.array() - mx).exp().sum()) + mx - v(label);
}

bool is_certified(const Network& net, const Vec& x, int label, const PerturbationSpec& spec) {
  Vec v = worst_case_logits(net, x, label, spec);
  for (long j = 0; j < v.size(); ++j)
    if (j != label && v(j) >= 0.0) return false;
  return true;
}

double certified_error(const Network& net, const Mat& X, const std::vector<int>& labels,
                       const PerturbationSpec& spec) {
  if (X.cols() == 0) throw std::invalid_argument("certified_error: empty dataset");
  if ((size_t)X.cols() != labels.size()) throw std::invalid_argument("label count mismatch");
  long bad = 0;
  for (long i = 0; i < X.cols(); ++i)
    if (!is_certified(net, X.col(i), labels[(size_t)i], spec)) ++bad;
  return (double)bad / (double)X.cols();
}

}  // namespace reachsense
