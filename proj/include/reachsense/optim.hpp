#pragma once

// Flat-vector first-order optimizers. State is explicit so training runs are
// reproducible and resumable; a non-finite gradient aborts the run loudly
// instead of silently corrupting the weights.

#include <variant>

#include "reachsense/grads.hpp"

namespace reachsense {

struct SgdConfig {
  double lr = 0.1;
  double momentum = 0.0;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

using OptimConfig = std::variant<SgdConfig, AdamConfig>;

struct OptimizerState {
  Vec m, v;   // momentum / first moment, second moment
  long t = 0; // completed steps
};

// One update in place; allocates state lazily on the first call.
void optimizer_step(OptimizerState& state, Vec& weights, const Vec& grad,
                    const OptimConfig& config);

// Network-level convenience wrapper.
Network optimizer_step(OptimizerState& state, const Network& net, const Gradients& grads,
                       const OptimConfig& config);

}  // namespace reachsense
