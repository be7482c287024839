#pragma once

// Fast sound over-approximation of the output reachable set under
// elementwise l-infinity input perturbations, via the LP-relaxation dual,
// plus the sensitivity measure and certified adversarial loss/error.

#include <vector>

#include "reachsense/bounds_core.hpp"
#include "reachsense/net.hpp"

namespace reachsense {

struct PerturbationSpec {
  Vec eps_v;           // per-input-dimension nonnegative bound, input units
  double sigma = 0.0;  // fraction used to build eps_v, 0 if built directly

  static PerturbationSpec from_sigma(const Vec& d_hat, double sigma);
  static PerturbationSpec uniform(int n, double eps);
  void validate(int input_dim) const;
};

struct PreactBounds {
  std::vector<Vec> lower, upper;  // one entry per weighted layer of the stack

  int layer_count() const { return (int)lower.size(); }
  // Unstable ReLU positions (stack layer, neuron); hidden layers only.
  std::vector<std::pair<int, int>> unstable() const;
  int unstable_count() const { return (int)unstable().size(); }
  bool contains_trace(const std::vector<Vec>& pre, double tol) const;
};

struct BoundsBox {
  enum class Method { Dual, Exact, Sampled };
  Vec y_min, y_max;
  Method method = Method::Dual;
  Vec eps_v;

  Vec widths() const { return y_max - y_min; }
  double volume() const { return widths().prod(); }
  bool contains(const Vec& y, double tol = 0.0) const;
  // a ⊆ b componentwise up to tol
  static bool nested(const BoundsBox& inner, const BoundsBox& outer, double tol = 0.0);
};

struct DualState {
  std::vector<Mat> nu;  // dual variables, innermost first
  PreactBounds bounds;
  Mat C;
};

PreactBounds preactivation_bounds(const Network& net, const Vec& x, const PerturbationSpec& spec,
                                  const ActOverride* overrides = nullptr);

// Rows of C define objectives c_j^T y; returns certified lower bounds on
// min c_j^T f(x+delta) over the perturbation box.
Vec dual_objective(const Network& net, const Vec& x, const Mat& C, const PerturbationSpec& spec,
                   const PreactBounds& pb, DualState* state = nullptr);

BoundsBox output_box_dual(const Network& net, const Vec& x, const PerturbationSpec& spec);

double sensitivity(const Network& net, const Vec& x, const PerturbationSpec& spec);
inline constexpr double kWidthFloor = 1e-12;
double log_sensitivity(const Network& net, const Vec& x, const PerturbationSpec& spec,
                       double delta = kWidthFloor);

// Worst-case logit vector: entry j is the certified max margin of class j
// against the true class (0 for the true class itself).
Vec worst_case_logits(const Network& net, const Vec& x, int label, const PerturbationSpec& spec);
double robust_loss(const Network& net, const Vec& x, int label, const PerturbationSpec& spec);
bool is_certified(const Network& net, const Vec& x, int label, const PerturbationSpec& spec);

// Fraction (0..1) of samples not certified robust; columns of X are samples.
double certified_error(const Network& net, const Mat& X, const std::vector<int>& labels,
                       const PerturbationSpec& spec);

}  // namespace reachsense
