#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>

#include "reachsense/milp_export.hpp"
#include "reachsense/verify.hpp"

using namespace reachsense;

namespace {

Network random_net(uint64_t seed, const std::string& arch = "2-4-3-2") {
  return init_network(ArchDescriptor::parse(arch), seed);
}

Vec random_vec(long n, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> d(-scale, scale);
  Vec v(n);
  for (long i = 0; i < n; ++i) v(i) = d(rng);
  return v;
}

BoundsBox sampled_hull(const Network& net, const Vec& x, const PerturbationSpec& spec, int n,
                       uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  Vec lo = Vec::Constant(net.output_dim(), 1e300);
  Vec hi = Vec::Constant(net.output_dim(), -1e300);
  for (int s = 0; s < n; ++s) {
    Vec xp = x;
    for (long i = 0; i < x.size(); ++i) xp(i) += u(rng) * spec.eps_v(i);
    Vec y = forward(net, xp).y;
    lo = lo.cwiseMin(y);
    hi = hi.cwiseMax(y);
  }
  return BoundsBox{lo, hi, BoundsBox::Method::Sampled, spec.eps_v};
}

}  // namespace

TEST_CASE("exact box sits between the sampled hull and the dual box") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 25; ++t) {
    Network net = random_net(1000 + t);
    Vec x = random_vec(2, rng, 1.5);
    PerturbationSpec spec = PerturbationSpec::uniform(2, 0.05 + 0.05 * (t % 3));
    VerifyOptions opts;
    opts.tol = 1e-9;
    ExactBox ex = exact_output_bounds(net, x, spec, opts);
    REQUIRE(ex.complete);
    BoundsBox dual = output_box_dual(net, x, spec);
    BoundsBox hull = sampled_hull(net, x, spec, 20000, 40 + t);
    CHECK(BoundsBox::nested(hull, ex.as_box(), 1e-7));
    CHECK(BoundsBox::nested(ex.as_box(), dual, 1e-7));
  }
}

TEST_CASE("all-stable networks are solved exactly by the dual") {
  std::mt19937_64 rng(7);
  int done = 0;
  for (int t = 0; done < 30 && t < 300; ++t) {
    Network net = random_net(2000 + t);
    Vec x = random_vec(2, rng, 1.5);
    PerturbationSpec spec = PerturbationSpec::uniform(2, 0.01);
    if (preactivation_bounds(net, x, spec).unstable_count() != 0) continue;
    ++done;
    VerifyOptions opts;
    opts.tol = 1e-9;
    ExactBox ex = exact_output_bounds(net, x, spec, opts);
    BoundsBox dual = output_box_dual(net, x, spec);
    CHECK((ex.y_min - dual.y_min).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK((ex.y_max - dual.y_max).cwiseAbs().maxCoeff() <= 1e-9);
  }
  CHECK(done == 30);
}

TEST_CASE("result is independent of the worker count") {
  std::mt19937_64 rng(11);
  Network net = random_net(3000);
  Vec x = random_vec(2, rng);
  PerturbationSpec spec = PerturbationSpec::uniform(2, 0.1);
  VerifyOptions one;
  one.threads = 1;
  VerifyOptions four;
  four.threads = 4;
  ExactBox a = exact_output_bounds(net, x, spec, one);
  ExactBox b = exact_output_bounds(net, x, spec, four);
  CHECK((a.y_min - b.y_min).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.y_max - b.y_max).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("REACHSENSE_THREADS caps the workers") {
  setenv("REACHSENSE_THREADS", "3", 1);
  CHECK(worker_count(0) == 3);
  CHECK(worker_count(8) == 3);
  CHECK(worker_count(2) == 2);
  unsetenv("REACHSENSE_THREADS");
  CHECK(worker_count(5) == 5);
}

TEST_CASE("sat queries agree with the exact box") {
  std::mt19937_64 rng(13);
  for (int t = 0; t < 10; ++t) {
    Network net = random_net(4000 + t);
    Vec x = random_vec(2, rng);
    PerturbationSpec spec = PerturbationSpec::uniform(2, 0.08);
    VerifyOptions opts;
    opts.tol = 1e-6;
    ExactBox ex = exact_output_bounds(net, x, spec, opts);
    REQUIRE(ex.complete);
    for (int i = 0; i < net.output_dim(); ++i) {
      ReluQuery below{i, ex.y_min(i) + 1e-3, ReluQuery::Dir::Min};
      CHECK(sat_query(net, x, spec, below, opts) == SatResult::Sat);
      ReluQuery impossible{i, ex.y_min(i) - 1e-3, ReluQuery::Dir::Min};
      CHECK(sat_query(net, x, spec, impossible, opts) == SatResult::Unsat);
      ReluQuery above{i, ex.y_max(i) - 1e-3, ReluQuery::Dir::Max};
      CHECK(sat_query(net, x, spec, above, opts) == SatResult::Sat);
    }
  }
}

TEST_CASE("bisection matches branch and bound within twice the tolerance") {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 10; ++t) {
    Network net = random_net(5000 + t);
    Vec x = random_vec(2, rng);
    PerturbationSpec spec = PerturbationSpec::uniform(2, 0.08);
    VerifyOptions opts;
    opts.tol = 1e-4;
    ExactBox bb = exact_output_bounds(net, x, spec, opts);
    BisectionResult bis = bisection_bounds(net, x, spec, opts);
    REQUIRE(bb.complete);
    REQUIRE(bis.box.complete);
    CHECK((bb.y_min - bis.box.y_min).cwiseAbs().maxCoeff() <= 2 * opts.tol);
    CHECK((bb.y_max - bis.box.y_max).cwiseAbs().maxCoeff() <= 2 * opts.tol);

    // call budget: ceil(log2(bracket / tol)) + 1 per bound
    BoundsBox dual = output_box_dual(net, x, spec);
    Vec y = forward(net, x).y;
    long budget = 0;
    for (int i = 0; i < net.output_dim(); ++i) {
      double lo_bracket = std::max(y(i) - dual.y_min(i), opts.tol);
      double hi_bracket = std::max(dual.y_max(i) - y(i), opts.tol);
      budget = std::max<long>(budget, (long)std::ceil(std::log2(lo_bracket / opts.tol)) + 1);
      budget = std::max<long>(budget, (long)std::ceil(std::log2(hi_bracket / opts.tol)) + 1);
    }
    CHECK(bis.max_calls_per_bound <= budget);
  }
}

TEST_CASE("budget exhaustion reports an incomplete dual box") {
  Network net = random_net(6000, "4-16-16-3");
  Vec x = Vec::Zero(4);
  PerturbationSpec spec = PerturbationSpec::uniform(4, 0.5);
  VerifyOptions opts;
  opts.unstable_budget = 2;  // force the refusal path
  ExactBox ex = exact_output_bounds(net, x, spec, opts);
  CHECK(!ex.complete);
  BoundsBox dual = output_box_dual(net, x, spec);
  CHECK((ex.y_min - dual.y_min).cwiseAbs().maxCoeff() == 0.0);
  ReluQuery q{0, dual.y_min(0) + 1e-3, ReluQuery::Dir::Min};
  CHECK(sat_query(net, x, spec, q, opts) == SatResult::Unknown);
}

TEST_CASE("gap report compares dual and exact sensitivity") {
  std::mt19937_64 rng(23);
  std::vector<Network> nets;
  for (int t = 0; t < 5; ++t) nets.push_back(random_net(7000 + t));
  Mat X(2, 6);
  for (int i = 0; i < 6; ++i) X.col(i) = random_vec(2, rng);
  PerturbationSpec spec = PerturbationSpec::uniform(2, 0.06);
  GapReport rep = compare_dual_exact(nets, X, spec);
  REQUIRE(rep.rows.size() == 5);
  for (const auto& row : rep.rows) {
    if (row.excluded) continue;
    CHECK(row.gap >= -1e-9);
    CHECK(row.s_dual >= row.s_exact - 1e-12);
  }
  CHECK(rep.max_gap >= rep.median_gap);
}

TEST_CASE("milp export writes a structurally sound lp file") {
  Network net = random_net(8000);
  Vec x(2);
  x << 0.3, -0.2;
  PerturbationSpec spec = PerturbationSpec::uniform(2, 0.1);
  std::string path = (std::filesystem::temp_directory_path() / "rs_milp.lp").string();
  MilpExportInfo info = export_milp(net, x, spec, 0, false, path);
  CHECK(info.binaries == preactivation_bounds(net, x, spec).unstable_count());

  std::ifstream f(path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  CHECK(text.find("Minimize") != std::string::npos);
  CHECK(text.find("Subject To") != std::string::npos);
  CHECK(text.find("Bounds") != std::string::npos);
  CHECK(text.find("End") != std::string::npos);
  if (info.binaries > 0) CHECK(text.find("Binary") != std::string::npos);
  CHECK_THROWS(export_milp(net, x, spec, 5, false, path));  // bad output index
}
