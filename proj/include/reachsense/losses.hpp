#pragma once

// The five training objectives. Every variant is cross-entropy plus an l2
// weight penalty; the regularized ones add their measure on top:
//   base    CE + lambda2 * sum ||W||_F^2
//   sm      + lambda   * mean log-sensitivity surrogate (sum of log widths)
//   jacobm  + lambda_j * mean ||df/dx||_F^2
//   specm   + lambda_s * sum_k sigma_max(W_k)^2   (power iteration)
//   kw      certified robust CE over the perturbation box (dual worst case)

#include <string>

#include "reachsense/bounds.hpp"
#include "reachsense/grads.hpp"

namespace reachsense {

enum class Method { Base, SM, JacobM, SpecM, KW };

Method parse_method(const std::string& s);
std::string method_name(Method m);

enum class SmPenalty { Product, Log };

struct LossParams {
  double lambda2 = 0.0;    // l2 weight decay coefficient
  double lambda = 1e-6;    // SM sensitivity weight
  double lambda_j = 0.01;  // jacobM weight
  double lambda_s = 0.01;  // specM weight
  double delta = kWidthFloor;
  SmPenalty sm_penalty = SmPenalty::Log;  // log-sensitivity surrogate; Product optional
  PerturbationSpec spec;   // perturbation box for sm and kw
  int power_iters = 2;     // power-iteration rounds per specM call
};

// Persistent power-iteration vectors, one pair per stack layer; warm-started
// across steps so a couple of rounds per step track sigma_max.
struct PowerIterState {
  std::vector<Vec> u, v;
};

ad::Value loss_base_graph(ad::Tape& t, AdNet& an, const Batch& batch, const LossParams& p);
ad::Value loss_sm_graph(ad::Tape& t, AdNet& an, const Batch& batch, const LossParams& p);
ad::Value loss_jacobm_graph(ad::Tape& t, AdNet& an, const Batch& batch, const LossParams& p);
ad::Value loss_specm_graph(ad::Tape& t, AdNet& an, const Batch& batch, const LossParams& p,
                           PowerIterState& state);
ad::Value loss_kw_graph(ad::Tape& t, AdNet& an, const Batch& batch, const LossParams& p);

// Bound method to params; specM needs its state kept alive by the caller.
LossGraphFn make_loss(Method m, const LossParams& p, PowerIterState* state = nullptr);

double loss_value(const LossGraphFn& fn, const Network& net, const Batch& batch);

}  // namespace reachsense
