#pragma once

// Unified evaluation record: one row of {CE, ERR, SENSE, JACOB, SPECTRAL,
// ADV_LOSS, ADV_ERR} per (net, split). Error rates are percentages.

#include <string>

#include "reachsense/bounds.hpp"
#include "reachsense/data.hpp"

namespace reachsense {

struct MetricRow {
  int epoch = 0;
  std::string split;
  std::string method;
  double ce = 0.0;
  double err = 0.0;       // top-1 error, percent
  double sense = 0.0;     // mean output-box volume over the eval subset
  double jacob = 0.0;     // mean squared Frobenius norm of df/dx
  double spectral = 0.0;  // sum over layers of sigma_max^2
  double adv_loss = 0.0;  // mean certified worst-case cross-entropy
  double adv_err = 0.0;   // percent not certified robust
};

struct EvalOptions {
  // Bound-based metrics (SENSE, JACOB, ADV_*) run on a fixed seeded subset
  // of at most this many samples; CE/ERR always use the full split.
  int sense_subset = 512;
  uint64_t subset_seed = 12345;
};

double top1_error_percent(const Network& net, const Mat& X, const std::vector<int>& labels);
double mean_cross_entropy(const Network& net, const Mat& X, const std::vector<int>& labels);

MetricRow evaluate(const Network& net, const Dataset& data, const PerturbationSpec& spec,
                   const EvalOptions& opts = {});

}  // namespace reachsense
