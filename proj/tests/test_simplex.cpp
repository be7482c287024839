#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>
#include <random>

#include "reachsense/simplex.hpp"

using namespace reachsense;

namespace {

// brute-force oracle: enumerate all n-subsets of the rows of [A; -I] as
// active constraints, keep feasible vertices, take the best objective
struct VertexOracle {
  bool feasible = false;
  double value = 0;
};

VertexOracle enumerate_vertices(const Vec& c, const Mat& A, const Vec& b) {
  const long n = c.size(), m = A.rows();
  Mat R(m + n, n);
  Vec r(m + n);
  R.topRows(m) = A;
  r.head(m) = b;
  R.bottomRows(n) = -Mat::Identity(n, n);
  r.tail(n).setZero();
  VertexOracle out;
  std::vector<int> pick(n);
  std::function<void(long, long)> rec = [&](long start, long k) {
    if (k == n) {
      Mat M(n, n);
      Vec rhs(n);
      for (long i = 0; i < n; ++i) {
        M.row(i) = R.row(pick[(size_t)i]);
        rhs(i) = r(pick[(size_t)i]);
      }
      Eigen::FullPivLU<Mat> lu(M);
      if (!lu.isInvertible()) return;
      Vec x = lu.solve(rhs);
      if (((R * x).array() <= r.array() + 1e-8).all()) {
        double v = c.dot(x);
        if (!out.feasible || v < out.value) out.value = v;
        out.feasible = true;
      }
      return;
    }
    for (long i = start; i <= m + n - (n - k); ++i) {
      pick[(size_t)k] = (int)i;
      rec(i + 1, k + 1);
    }
  };
  rec(0, 0);
  return out;
}

}  // namespace

TEST_CASE("hand-checked LPs") {
  // min -x - y  s.t. x + y <= 4, x <= 3  (x,y >= 0): optimum -4
  Mat A(2, 2);
  A << 1, 1, 1, 0;
  Vec b(2);
  b << 4, 3;
  Vec c(2);
  c << -1, -1;
  LpResult r = solve_lp(c, A, b);
  CHECK(r.status == LpStatus::Optimal);
  CHECK(r.value == doctest::Approx(-4.0).epsilon(1e-10));

  // infeasible: x <= -1 with x >= 0
  Mat Ai(1, 1);
  Ai << 1;
  Vec bi(1);
  bi << -1;
  CHECK(solve_lp(Vec::Ones(1), Ai, bi).status == LpStatus::Infeasible);

  // unbounded: min -x, no upper constraint
  Mat Au(1, 1);
  Au << -1;
  Vec bu(1);
  bu << 0;
  CHECK(solve_lp(-Vec::Ones(1), Au, bu).status == LpStatus::Unbounded);
}

TEST_CASE("negative right-hand sides need phase one") {
  // x >= 2 encoded as -x <= -2; min x -> 2
  Mat A(1, 1);
  A << -1;
  Vec b(1);
  b << -2;
  LpResult r = solve_lp(Vec::Ones(1), A, b);
  CHECK(r.status == LpStatus::Optimal);
  CHECK(r.value == doctest::Approx(2.0));
}

TEST_CASE("random LPs agree with vertex enumeration") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> d(-2, 2);
  int optimal = 0;
  for (int trial = 0; trial < 300; ++trial) {
    long n = 2 + (long)(rng() % 3);  // 2..4
    long m = 1 + (long)(rng() % 5);  // 1..5
    Mat A(m + n, n);
    Vec b(m + n);
    for (long i = 0; i < m; ++i) {
      for (long j = 0; j < n; ++j) A(i, j) = d(rng);
      b(i) = d(rng);
    }
    A.bottomRows(n) = Mat::Identity(n, n);  // cap the box so feasible => bounded
    b.tail(n).setConstant(10.0);
    Vec c(n);
    for (long j = 0; j < n; ++j) c(j) = d(rng);

    LpResult r = solve_lp(c, A, b);
    VertexOracle oracle = enumerate_vertices(c, A, b);
    if (oracle.feasible) {
      REQUIRE(r.status == LpStatus::Optimal);
      CHECK(r.value == doctest::Approx(oracle.value).epsilon(1e-7));
      CHECK(((A * r.x).array() <= b.array() + 1e-7).all());
      CHECK((r.x.array() >= -1e-9).all());
      ++optimal;
    } else {
      CHECK(r.status == LpStatus::Infeasible);
    }
  }
  CHECK(optimal > 100);  // the sweep actually exercised the optimal path
}

TEST_CASE("degenerate vertices do not cycle") {
  // many redundant constraints through the same vertex
  Mat A(5, 2);
  A << 1, 0, 0, 1, 1, 1, 2, 2, 1, 2;
  Vec b(5);
  b << 1, 1, 2, 4, 3;
  Vec c(2);
  c << -1, -1;
  LpResult r = solve_lp(c, A, b);
  CHECK(r.status == LpStatus::Optimal);
  CHECK(r.value == doctest::Approx(-2.0));
}

TEST_CASE("box LP reduction") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> d(-1, 1);
  for (int trial = 0; trial < 100; ++trial) {
    long n = 2 + (long)(rng() % 2);
    Vec lo(n), hi(n), c(n);
    for (long j = 0; j < n; ++j) {
      lo(j) = d(rng) - 1.5;
      hi(j) = lo(j) + 0.5 + std::abs(d(rng));
      c(j) = d(rng);
    }
    long m = 1 + (long)(rng() % 3);
    Mat G(m, n);
    Vec h(m);
    for (long i = 0; i < m; ++i) {
      for (long j = 0; j < n; ++j) G(i, j) = d(rng);
      h(i) = d(rng) + 1.0;  // usually feasible at the box center
    }
    LpResult r = solve_box_lp(c, G, h, lo, hi);

    // oracle in shifted coordinates
    Mat A(m + n, n);
    Vec b(m + n);
    A.topRows(m) = G;
    b.head(m) = h - G * lo;
    A.bottomRows(n) = Mat::Identity(n, n);
    b.tail(n) = hi - lo;
    VertexOracle oracle = enumerate_vertices(c, A, b);
    if (oracle.feasible) {
      REQUIRE(r.status == LpStatus::Optimal);
      CHECK(r.value == doctest::Approx(oracle.value + c.dot(lo)).epsilon(1e-7));
      CHECK((r.x.array() >= lo.array() - 1e-9).all());
      CHECK((r.x.array() <= hi.array() + 1e-9).all());
    } else {
      CHECK(r.status == LpStatus::Infeasible);
    }
  }
}
