#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "reachsense/landscape.hpp"

using namespace reachsense;

namespace {

Dataset xor_dataset() {
  Dataset d;
  d.name = "xor";
  d.X.resize(2, 4);
  d.X << 0, 0, 1, 1, 0, 1, 0, 1;
  d.y = {0, 1, 1, 0};
  d.classes = 2;
  return d;
}

}  // namespace

TEST_CASE("lbfgs solves a quadratic") {
  Mat A(3, 3);
  A << 4, 1, 0, 1, 3, 0.5, 0, 0.5, 2;
  Vec b(3);
  b << 1, -2, 0.5;
  ObjectiveFn fn = [&](const Vec& x, Vec& g) {
    g = A * x - b;
    return 0.5 * x.dot(A * x) - b.dot(x);
  };
  LbfgsResult r = lbfgs_minimize(fn, Vec::Zero(3));
  CHECK(r.converged);
  CHECK((A * r.x - b).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("lbfgs solves rosenbrock from a cold start") {
  const int n = 10;
  ObjectiveFn fn = [](const Vec& x, Vec& g) {
    double f = 0;
    g = Vec::Zero(x.size());
    for (long i = 0; i + 1 < x.size(); ++i) {
      double a = x(i + 1) - x(i) * x(i), b = 1 - x(i);
      f += 100 * a * a + b * b;
      g(i) += -400 * x(i) * a - 2 * b;
      g(i + 1) += 200 * a;
    }
    return f;
  };
  LbfgsResult r = lbfgs_minimize(fn, Vec::Constant(n, -1.2));
  CHECK(r.converged);
  CHECK((r.x.array() - 1.0).abs().maxCoeff() <= 1e-5);
}

TEST_CASE("dense objective matches the tape gradient") {
  Dataset d = xor_dataset();
  Network proto = init_network(ArchDescriptor::parse("2-6-2"), 3);
  ObjectiveFn fast = dense_base_objective(proto, d, 0.01);

  LossParams p;
  p.lambda2 = 0.01;
  LossGraphFn slow = make_loss(Method::Base, p);
  Batch full{d.X, d.y};

  std::mt19937_64 rng(5);
  std::normal_distribution<double> g01(0.0, 0.7);
  for (int t = 0; t < 5; ++t) {
    Vec w(proto.parameter_count());
    for (long i = 0; i < w.size(); ++i) w(i) = g01(rng);
    Vec gf(w.size());
    double ff = fast(w, gf);
    LossAndGrad lg = gradient(slow, with_weights(proto, w), full);
    CHECK(std::abs(ff - lg.value) <= 1e-12 * std::max(1.0, std::abs(ff)));
    CHECK((gf - lg.grads.flatten()).cwiseAbs().maxCoeff() <= 1e-12);
  }
  Network conv = init_network(ArchDescriptor::parse("1x4x4-c2k3s1p1-2"), 1);
  CHECK_THROWS(dense_base_objective(conv, d, 0.0));
}

TEST_CASE("xor restarts find at least two distinct minima") {
  Dataset d = xor_dataset();
  LbfgsOptions lo;
  // relu kink minima keep |grad|_inf around 1e-2 even when f has fully
  // converged, so the nonsmooth sweep uses a loose threshold
  lo.grad_tol = 0.1;
  HopConfig hc;
  hc.hops = 0;
  MinimaDB db = sample_minima("2-8-2", d, 0.01, 100, hc, 424242, lo, 0);
  CHECK(db.minima.size() >= 2);
  for (size_t i = 1; i < db.minima.size(); ++i) {
    CHECK(db.minima[i].energy > db.minima[i - 1].energy);  // sorted and distinct
    CHECK(db.minima[i].energy - db.minima[i - 1].energy > db.dedup_tol);
  }
  for (const auto& m : db.minima) {
    CHECK(m.grad_inf <= lo.grad_tol);
    CHECK(std::isfinite(m.energy));
  }
}

TEST_CASE("sampling is deterministic in the seed") {
  Dataset d = xor_dataset();
  LbfgsOptions lo;
  lo.grad_tol = 0.1;
  HopConfig hc;
  hc.hops = 2;
  MinimaDB a = sample_minima("2-4-2", d, 0.01, 6, hc, 7, lo, 1);
  MinimaDB b = sample_minima("2-4-2", d, 0.01, 6, hc, 7, lo, 4);  // threads must not matter
  REQUIRE(a.minima.size() == b.minima.size());
  for (size_t i = 0; i < a.minima.size(); ++i)
    CHECK((a.minima[i].weights - b.minima[i].weights).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("dedup keeps the lowest representative per energy cluster") {
  MinimaDB db;
  db.arch = "2-4-2";
  for (double e : {1.0, 1.0000005, 2.0, 0.5, 0.50000001}) {
    Minimum m;
    m.weights = Vec::Constant(1, e);
    m.energy = e;
    db.minima.push_back(m);
  }
  MinimaDB out = dedup_minima(db, 1e-6);
  REQUIRE(out.minima.size() == 3);
  CHECK(out.minima[0].energy == 0.5);
  CHECK(out.minima[1].energy == 1.0);
  CHECK(out.minima[2].energy == 2.0);
  // idempotent
  MinimaDB again = dedup_minima(out, 1e-6);
  CHECK(again.minima.size() == 3);
  CHECK_THROWS(dedup_minima(db, 0.0));
}

TEST_CASE("spearman handles ties and degenerate input") {
  CHECK(spearman_rho({1, 2, 3}, {10, 20, 30}) == doctest::Approx(1.0));
  CHECK(spearman_rho({1, 2, 3}, {30, 20, 10}) == doctest::Approx(-1.0));
  // hand case with a tie: ranks a = 1, 2.5, 2.5, 4
  double rho = spearman_rho({1, 2, 2, 3}, {1, 2, 3, 4});
  CHECK(rho == doctest::Approx(0.9486832980505138).epsilon(1e-12));
  CHECK(std::isnan(spearman_rho({1}, {2})));
  CHECK(std::isnan(spearman_rho({1, 1}, {1, 2})));  // constant input: undefined
}

TEST_CASE("study on a single minimum is undefined") {
  Dataset d = xor_dataset();
  MinimaDB db;
  db.arch = "2-4-2";
  Minimum m;
  m.weights = flatten_weights(init_network(ArchDescriptor::parse("2-4-2"), 1));
  m.energy = 1.0;
  db.minima.push_back(m);
  auto res = energy_sensitivity_study(db, d, {0.1}, 4, 1, 1);
  REQUIRE(res.size() == 1);
  CHECK(!res[0].defined);
  CHECK(db.minima[0].sens.size() == 1);  // sensitivities still recorded
  MinimaDB empty;
  CHECK_THROWS(energy_sensitivity_study(empty, d, {0.1}, 4, 1, 1));
}

TEST_CASE("study rows carry both averaging conventions") {
  Dataset d = xor_dataset();
  LbfgsOptions lo;
  lo.grad_tol = 0.1;
  HopConfig hc;
  hc.hops = 0;
  MinimaDB db = sample_minima("2-6-2", d, 0.01, 12, hc, 5, lo, 0);
  REQUIRE(db.minima.size() >= 2);
  auto res = energy_sensitivity_study(db, d, {0.05, 0.1}, 2, 9, 0);
  REQUIRE(res.size() == 2);
  for (const auto& sr : res) {
    CHECK(sr.subset_size == 2);
    CHECK(sr.rows.size() == db.minima.size());
    for (const auto& row : sr.rows) {
      CHECK(row.sens_subset >= 0);
      CHECK(row.sens_full >= 0);
    }
  }
  // energies ascend with the db order; sens vector indexed by sigma
  for (const auto& m : db.minima) {
    REQUIRE(m.sens.size() == 2);
    CHECK(m.sens[0] <= m.sens[1]);  // boxes nest in sigma
  }
}

TEST_CASE("minima db round trips through disk") {
  Dataset d = xor_dataset();
  LbfgsOptions lo;
  lo.grad_tol = 0.1;
  HopConfig hc;
  hc.hops = 0;
  MinimaDB db = sample_minima("2-4-2", d, 0.01, 5, hc, 31, lo, 0);
  REQUIRE(!db.minima.empty());
  energy_sensitivity_study(db, d, {0.1}, 4, 1, 0);
  std::string dir = (std::filesystem::temp_directory_path() / "rs_minima_db").string();
  std::filesystem::remove_all(dir);
  save_minima_db(db, dir);
  MinimaDB back = load_minima_db(dir);
  REQUIRE(back.minima.size() == db.minima.size());
  CHECK(back.arch == db.arch);
  CHECK(back.lambda2 == db.lambda2);
  CHECK(back.dropped == db.dropped);
  for (size_t i = 0; i < db.minima.size(); ++i) {
    CHECK((back.minima[i].weights - db.minima[i].weights).cwiseAbs().maxCoeff() == 0.0);
    CHECK(back.minima[i].energy == db.minima[i].energy);
    CHECK(back.minima[i].sens == db.minima[i].sens);
  }
  CHECK_THROWS(load_minima_db(dir + "_missing"));
}
