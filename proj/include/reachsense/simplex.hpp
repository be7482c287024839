#pragma once

// Dense two-phase tableau simplex. Dantzig pivoting with a Bland's-rule
// fallback once the iteration count suggests cycling.

#include "reachsense/ad.hpp"

namespace reachsense {

enum class LpStatus { Optimal, Infeasible, Unbounded, IterLimit };

struct LpResult {
  LpStatus status = LpStatus::IterLimit;
  double value = 0.0;
  Vec x;  // structural variables at the optimum (when Optimal)
};

struct LpOptions {
  double feas_tol = 1e-9;
  double opt_tol = 1e-9;
  long max_iter = 0;  // 0 = automatic from problem size
};

// min c^T s  subject to  A s <= b,  s >= 0.
LpResult solve_lp(const Vec& c, const Mat& A, const Vec& b, const LpOptions& opt = {});

// min c^T x  subject to  G x <= h,  lo <= x <= hi  (finite box).
LpResult solve_box_lp(const Vec& c, const Mat& G, const Vec& h, const Vec& lo, const Vec& hi,
                      const LpOptions& opt = {});

}  // namespace reachsense
