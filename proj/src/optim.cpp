#include "reachsense/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace reachsense {

void optimizer_step(OptimizerState& state, Vec& weights, const Vec& grad,
                    const OptimConfig& config) {
  if (grad.size() != weights.size())
    throw std::invalid_argument("optimizer_step: gradient/weight size mismatch");
  if (!grad.allFinite())
    throw std::runtime_error("optimizer_step: non-finite gradient at step " +
                             std::to_string(state.t + 1) + ", |g|_inf = " +
                             std::to_string(grad.cwiseAbs().maxCoeff()));
  if (state.m.size() != weights.size()) {
    state.m = Vec::Zero(weights.size());
    state.v = Vec::Zero(weights.size());
    state.t = 0;
  }
  ++state.t;
  if (const auto* sgd = std::get_if<SgdConfig>(&config)) {
    if (sgd->momentum != 0.0) {
      state.m = sgd->momentum * state.m + grad;
      weights -= sgd->lr * state.m;
    } else {
      weights -= sgd->lr * grad;
    }
    return;
  }
  const auto& a = std::get<AdamConfig>(config);
  state.m = a.beta1 * state.m + (1.0 - a.beta1) * grad;
  state.v = a.beta2 * state.v + (1.0 - a.beta2) * grad.cwiseProduct(grad);
  double bc1 = 1.0 - std::pow(a.beta1, (double)state.t);
  double bc2 = 1.0 - std::pow(a.beta2, (double)state.t);
  Vec mhat = state.m / bc1;
  Vec vhat = state.v / bc2;
  weights -= (a.lr * mhat.array() / (vhat.array().sqrt() + a.eps)).matrix();
}

Network optimizer_step(OptimizerState& state, const Network& net, const Gradients& grads,
                       const OptimConfig& config) {
  Vec w = flatten_weights(net);
  optimizer_step(state, w, grads.flatten(), config);
  return with_weights(net, w);
}

}  // namespace reachsense
