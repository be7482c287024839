#pragma once

// Exact output bounds for small ReLU networks: branch-and-bound over
// activation patterns with dual node bounding and simplex leaf LPs, a
// bisection satisfiability driver, and the dual-vs-exact gap study.

#include <vector>

#include "reachsense/bounds.hpp"
#include "reachsense/simplex.hpp"

namespace reachsense {

struct ReluQuery {
  int output = 0;
  double threshold = 0.0;
  enum class Dir { Min, Max } dir = Dir::Min;  // Min: exists y[i] <= t; Max: exists y[i] >= t
};

enum class SatResult { Sat, Unsat, Unknown };

struct ExactBox {
  Vec y_min, y_max;
  double tol = 0.0;
  long nodes = 0;
  double seconds = 0.0;
  bool complete = true;  // false: budget exceeded, bounds are only the dual box
  Vec eps_v;

  BoundsBox as_box() const {
    return BoundsBox{y_min, y_max, complete ? BoundsBox::Method::Exact : BoundsBox::Method::Dual,
                     eps_v};
  }
  double volume() const { return (y_max - y_min).prod(); }
};

struct VerifyOptions {
  double tol = 1e-4;          // output-unit certification tolerance
  int unstable_budget = 24;   // refuse exact claims beyond this many unstable ReLUs
  long node_budget = 2'000'000;
  int threads = 0;            // 0 = REACHSENSE_THREADS env or 1
  int incumbent_samples = 64; // random box samples seeding the incumbent
};

ExactBox exact_output_bounds(const Network& net, const Vec& x, const PerturbationSpec& spec,
                             const VerifyOptions& opts = {});

SatResult sat_query(const Network& net, const Vec& x, const PerturbationSpec& spec,
                    const ReluQuery& q, const VerifyOptions& opts = {});

struct BisectionResult {
  ExactBox box;
  long max_calls_per_bound = 0;
  long total_calls = 0;
};

BisectionResult bisection_bounds(const Network& net, const Vec& x, const PerturbationSpec& spec,
                                 const VerifyOptions& opts = {});

struct GapRow {
  int net_index = 0;
  double s_dual = 0.0, s_exact = 0.0, gap = 0.0;
  bool excluded = false;  // s_exact == 0 rows carry no ratio
};

struct GapReport {
  std::vector<GapRow> rows;
  double median_gap = 0.0, max_gap = 0.0;
  int excluded = 0;
};

// Mean sensitivity over the sample columns of X per net, dual vs exact;
// gap = (S_dual - S_exact) / S_exact.
GapReport compare_dual_exact(const std::vector<Network>& nets, const Mat& X,
                             const PerturbationSpec& spec, const VerifyOptions& opts = {});

int worker_count(int requested);  // REACHSENSE_THREADS-capped

}  // namespace reachsense
