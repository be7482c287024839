#pragma once

// Loss-landscape minima sampling: restarted L-BFGS with basin hopping,
// energetic deduplication, and the energy-vs-sensitivity rank-correlation
// study. "Energy" is the full training loss including the l2 term.

#include <functional>

#include "reachsense/losses.hpp"
#include "reachsense/metrics.hpp"

namespace reachsense {

struct LbfgsOptions {
  int memory = 10;
  double grad_tol = 1e-6;  // converged when |grad|_inf <= grad_tol
  int max_iters = 5000;
  double c1 = 1e-4, c2 = 0.9;  // strong Wolfe constants
};

struct LbfgsResult {
  Vec x;
  double f = 0.0;
  double grad_inf = 0.0;
  int iters = 0;
  bool converged = false;
};

// fn evaluates f(x) and writes the gradient into g.
using ObjectiveFn = std::function<double(const Vec& x, Vec& g)>;

LbfgsResult lbfgs_minimize(const ObjectiveFn& fn, Vec x0, const LbfgsOptions& opts = {});

// Analytic objective for all-dense networks: cross-entropy plus
// lambda2 * sum ||W||_F^2 with hand-rolled backprop. Matches the tape-built
// base loss; used as the fast inner loop of minima sampling.
ObjectiveFn dense_base_objective(const Network& proto, const Dataset& data, double lambda2);

struct HopConfig {
  int hops = 50;
  double scale = 0.5;        // Gaussian step = scale * RMS of current weights
  double temperature = 1.0;  // Metropolis acceptance temperature
};

struct Minimum {
  Vec weights;
  double energy = 0.0;
  double grad_inf = 0.0;
  double error_percent = 0.0;
  std::vector<double> sens;  // per sigma, filled by the study
  uint64_t seed = 0;         // restart seed that produced it
};

struct MinimaDB {
  std::vector<Minimum> minima;
  double dedup_tol = 1e-6;
  std::string arch;
  double lambda2 = 0.0;
  int dropped = 0;  // non-convergent local minimizations
};

MinimaDB sample_minima(const std::string& arch, const Dataset& data, double lambda2,
                       int n_restarts, const HopConfig& hop, uint64_t seed,
                       const LbfgsOptions& lbfgs = {}, int threads = 0);

// Keeps the lowest-energy representative of each cluster of energies closer
// than tol_energy (greedy over the sorted energies).
MinimaDB dedup_minima(const MinimaDB& db, double tol_energy);

// Spearman rank correlation with averaged tied ranks; NaN when undefined.
double spearman_rho(const std::vector<double>& a, const std::vector<double>& b);

struct StudyRow {
  int index = 0;
  double energy = 0.0;
  double sens_subset = 0.0;  // mean dual sensitivity over the seeded subset
  double sens_full = 0.0;    // mean over the full dataset
};

struct StudyResult {
  double sigma = 0.0;
  int subset_size = 0;
  std::vector<StudyRow> rows;
  double rho_subset = 0.0, rho_full = 0.0;
  bool defined = false;  // false for fewer than two minima
};

std::vector<StudyResult> energy_sensitivity_study(MinimaDB& db, const Dataset& data,
                                                  const std::vector<double>& sigmas,
                                                  int subset_size, uint64_t subset_seed,
                                                  int threads = 0);

// Directory of model files plus index.csv.
void save_minima_db(const MinimaDB& db, const std::string& dir);
MinimaDB load_minima_db(const std::string& dir);

Network minimum_network(const MinimaDB& db, const Minimum& m);

}  // namespace reachsense
