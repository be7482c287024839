#pragma once

// Training driver. Batch order is a pure function of (dataset size, batch
// size, seed, epoch), so runs with different loss methods but the same seed
// consume identical sample sequences.

#include "reachsense/losses.hpp"
#include "reachsense/metrics.hpp"
#include "reachsense/optim.hpp"

namespace reachsense {

struct TrainingConfig {
  std::string arch = "4-8-3";
  Method method = Method::Base;
  double lambda = 1e-6;    // SM weight
  double lambda2 = 0.0;    // l2 weight decay
  double lambda_j = 0.01;  // jacobM weight
  double lambda_s = 0.01;  // specM weight
  double sigma = 0.0;      // perturbation fraction (sm, kw, and evaluation)
  SmPenalty sm_penalty = SmPenalty::Log;
  std::string optimizer = "adam";  // "sgd" | "adam"
  double lr = 1e-3;
  double momentum = 0.0;  // sgd only
  int epochs = 10;
  int batch = 32;
  uint64_t seed = 1;
  int eval_every = 1;    // epochs between metric rows (0 = final only)
  bool kw_ramp = true;   // kw: epsilon ramps linearly 0 -> sigma over epoch 1
  EvalOptions eval;

  void validate() const;
};

struct TrainResult {
  Network net;
  std::vector<MetricRow> log;
  PerturbationSpec spec;  // evaluation perturbation, from the train-split d_hat
};

TrainResult train(const TrainingConfig& cfg, const Dataset& train_set, const Dataset& test_set);

}  // namespace reachsense
