#include "reachsense/verify.hpp"

#include <algorithm>
#include <atomic>
#include <functional>
#include <limits>
#include <optional>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <random>
#include <thread>

namespace reachsense {

int worker_count(int requested) {
  int n = requested;
  if (const char* env = std::getenv("REACHSENSE_THREADS")) {
    int cap = std::atoi(env);
    if (cap >= 1) n = n > 0 ? std::min(n, cap) : cap;
  }
  if (n <= 0) n = std::min(8u, std::max(1u, std::thread::hardware_concurrency()));
  return n;
}

namespace {

void parallel_tasks(int n_tasks, int threads, const std::function<void(int)>& fn) {
  threads = std::min(threads, n_tasks);
  if (threads <= 1) {
    for (int i = 0; i < n_tasks; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&]() {
      for (int i = next.fetch_add(1); i < n_tasks; i = next.fetch_add(1)) fn(i);
    });
  for (auto& th : pool) th.join();
}

struct BnbContext {
  StackT<Mat> st;
  Vec x, lo, hi;
  Vec eps_v;
  PreactBounds pb;
  std::vector<Mat> lbm, ubm;
  std::vector<std::pair<int, int>> unstable;
  std::vector<std::vector<int>> nominal_sign;  // per hidden layer, +-1 at x
  VerifyOptions opts;

  BnbContext(const Network& net, const Vec& x_in, const PerturbationSpec& spec,
             const VerifyOptions& o)
      : st(make_stack(net)), x(x_in), eps_v(spec.eps_v), opts(o) {
    spec.validate(net.input_dim());
    lo = x - spec.eps_v;
    hi = x + spec.eps_v;
    pb = preactivation_bounds(net, x, spec);
    for (size_t i = 0; i < pb.lower.size(); ++i) {
      lbm.emplace_back(Mat(pb.lower[i]));
      ubm.emplace_back(Mat(pb.upper[i]));
    }
    unstable = pb.unstable();
    ForwardTrace tr = forward(net, x);
    // trace is over the network's weighted layers; recompute on the stack
    // to stay aligned with fused layers
    Vec z = x;
    for (int k = 0; k + 1 < st.layers(); ++k) {
      Vec pre = st.W[(size_t)k] * z + Vec(st.b[(size_t)k]);
      std::vector<int> sg(pre.size());
      for (long j = 0; j < pre.size(); ++j) sg[(size_t)j] = pre(j) > 0 ? 1 : -1;
      nominal_sign.push_back(std::move(sg));
      z = pre.cwiseMax(0.0);
    }
    (void)tr;
  }

  ActOverride empty_override() const {
    ActOverride ov(lbm.size() > 0 ? lbm.size() - 1 : 0);
    for (size_t k = 0; k + 1 < lbm.size(); ++k) ov[k].assign((size_t)lbm[k].rows(), 0);
    return ov;
  }
};

// Exact objective minimum over the region of one fully-fixed activation
// pattern; returns nullopt when the pattern region is empty.
std::optional<double> leaf_lp(const BnbContext& ctx, const ActOverride& ov, const Vec& c) {
  const int K = ctx.st.layers();
  Mat A = ctx.st.W[0];
  Vec q = Vec(ctx.st.b[0]);
  std::vector<Vec> grows;
  std::vector<double> gb;
  for (int k = 0; k < K; ++k) {
    if (k > 0) {
      q = ctx.st.W[(size_t)k] * q + Vec(ctx.st.b[(size_t)k]);
      A = ctx.st.W[(size_t)k] * A;
    }
    if (k == K - 1) break;
    const Vec& l = ctx.pb.lower[(size_t)k];
    const Vec& u = ctx.pb.upper[(size_t)k];
    for (long j = 0; j < l.size(); ++j) {
      bool active;
      if (l(j) >= 0.0)
        active = true;
      else if (u(j) <= 0.0)
        active = false;
      else {
        int8_t s = ov[(size_t)k][(size_t)j];
        if (s == 0) throw std::logic_error("leaf_lp: unassigned unstable neuron");
        active = s > 0;
        // pattern constraint: zhat_j >= 0 (active) or <= 0 (inactive)
        if (active) {
          grows.emplace_back(-A.row(j).transpose());
          gb.push_back(q(j));
        } else {
          grows.emplace_back(A.row(j).transpose());
          gb.push_back(-q(j));
        }
      }
      if (!active) {
        A.row(j).setZero();
        q(j) = 0.0;
      }
    }
  }
  Vec g = A.transpose() * c;
  double off = c.dot(q);
  Mat G(grows.size(), ctx.x.size());
  Vec h(grows.size());
  for (size_t i = 0; i < grows.size(); ++i) {
    G.row((long)i) = grows[i].transpose();
    h((long)i) = gb[i];
  }
  LpResult r = solve_box_lp(g, G, h, ctx.lo, ctx.hi);
  if (r.status == LpStatus::Infeasible) return std::nullopt;
  if (r.status == LpStatus::IterLimit) throw std::runtime_error("simplex cycling guard triggered");
  if (r.status == LpStatus::Unbounded) throw std::logic_error("box LP cannot be unbounded");
  return r.value + off;
}

struct BnbOutcome {
  double incumbent = std::numeric_limits<double>::infinity();
  long nodes = 0;
  bool budget_hit = false;
  bool sat = false;
};

struct BnbSearch {
  const BnbContext& ctx;
  Vec c;
  Mat c_col;
  double prune_slack;
  bool sat_mode = false;
  double sat_threshold = 0.0;
  BnbOutcome out;

  BnbSearch(const BnbContext& context, const Vec& obj, double slack)
      : ctx(context), c(obj), c_col(Mat(obj)), prune_slack(slack) {}

  void seed_incumbent(uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    auto eval_at = [&](const Vec& xx) {
      Vec z = xx;
      for (int k = 0; k < ctx.st.layers(); ++k) {
        Vec pre = ctx.st.W[(size_t)k] * z + Vec(ctx.st.b[(size_t)k]);
        z = (k + 1 < ctx.st.layers()) ? Vec(pre.cwiseMax(0.0)) : pre;
      }
      return c.dot(z);
    };
    consider(eval_at(ctx.x));
    for (int s = 0; s < ctx.opts.incumbent_samples; ++s) {
      Vec xx(ctx.x.size());
      for (long j = 0; j < xx.size(); ++j) xx(j) = ctx.lo(j) + u01(rng) * (ctx.hi(j) - ctx.lo(j));
      consider(eval_at(xx));
    }
  }

  void consider(double val) {
    out.incumbent = std::min(out.incumbent, val);
    if (sat_mode && val <= sat_threshold) out.sat = true;
  }

  void run() {
    ActOverride ov = ctx.empty_override();
    recurse(ov);
  }

  void recurse(ActOverride& ov) {
    if (out.budget_hit || (sat_mode && out.sat)) return;
    if (++out.nodes > ctx.opts.node_budget) {
      out.budget_hit = true;
      return;
    }
    EigenCtx ectx;
    Mat lbv = dual_lower(ectx, ctx.st, ctx.st.layers(), Mat(ctx.x), ctx.eps_v, c_col, ctx.lbm,
                         ctx.ubm, &ov);
    double lb = lbv(0, 0);
    if (sat_mode) {
      if (lb > sat_threshold) return;
    } else if (lb >= out.incumbent - prune_slack) {
      return;
    }
    // widest free unstable neuron
    int bk = -1, bj = -1;
    double bw = -1.0;
    for (const auto& [k, j] : ctx.unstable) {
      if (ov[(size_t)k][(size_t)j] != 0) continue;
      double w = ctx.pb.upper[(size_t)k](j) - ctx.pb.lower[(size_t)k](j);
      if (w > bw) {
        bw = w;
        bk = k;
        bj = j;
      }
    }
    if (bk < 0) {
      auto val = leaf_lp(ctx, ov, c);
      if (val) consider(*val);
      return;
    }
    int8_t first = ctx.nominal_sign[(size_t)bk][(size_t)bj] > 0 ? int8_t(1) : int8_t(-1);
    for (int8_t s : {first, int8_t(-first)}) {
      ov[(size_t)bk][(size_t)bj] = s;
      recurse(ov);
      if (out.budget_hit || (sat_mode && out.sat)) break;
    }
    ov[(size_t)bk][(size_t)bj] = 0;
  }
};

}  // namespace

ExactBox exact_output_bounds(const Network& net, const Vec& x, const PerturbationSpec& spec,
                             const VerifyOptions& opts) {
  if (opts.tol <= 0) throw std::invalid_argument("tol must be > 0");
  auto t0 = std::chrono::steady_clock::now();
  BnbContext ctx(net, x, spec, opts);
  int m = net.output_dim();
  ExactBox box;
  box.tol = opts.tol;
  box.eps_v = spec.eps_v;
  box.y_min = ctx.pb.lower.back();
  box.y_max = ctx.pb.upper.back();
  if ((int)ctx.unstable.size() > opts.unstable_budget) {
    box.complete = false;
    return box;
  }
  std::vector<BnbOutcome> outs((size_t)(2 * m));
  std::vector<double> vals((size_t)(2 * m));
  parallel_tasks(2 * m, worker_count(opts.threads), [&](int t) {
    int i = t / 2;
    bool maximize = (t % 2) == 1;
    Vec c = Vec::Zero(m);
    c(i) = maximize ? -1.0 : 1.0;
    BnbSearch s(ctx, c, opts.tol);
    s.seed_incumbent(0x5eed0000u + (uint64_t)t);
    s.run();
    outs[(size_t)t] = s.out;
    vals[(size_t)t] = maximize ? -s.out.incumbent : s.out.incumbent;
  });
  for (int t = 0; t < 2 * m; ++t) {
    box.nodes += outs[(size_t)t].nodes;
    if (outs[(size_t)t].budget_hit) box.complete = false;
  }
  if (box.complete) {
    for (int i = 0; i < m; ++i) {
      box.y_min(i) = vals[(size_t)(2 * i)];
      box.y_max(i) = vals[(size_t)(2 * i + 1)];
    }
  }
  box.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return box;
}

SatResult sat_query(const Network& net, const Vec& x, const PerturbationSpec& spec,
                    const ReluQuery& q, const VerifyOptions& opts) {
  if (!std::isfinite(q.threshold)) throw std::invalid_argument("sat_query: non-finite threshold");
  BnbContext ctx(net, x, spec, opts);
  if ((int)ctx.unstable.size() > opts.unstable_budget) return SatResult::Unknown;
  int m = net.output_dim();
  if (q.output < 0 || q.output >= m) throw std::invalid_argument("sat_query: bad output index");
  // Min direction asks for a point with y[i] <= t: minimize y[i] against t.
  // Max direction asks for y[i] >= t: minimize -y[i] against -t.
  Vec c = Vec::Zero(m);
  c(q.output) = q.dir == ReluQuery::Dir::Min ? 1.0 : -1.0;
  double thr = q.dir == ReluQuery::Dir::Min ? q.threshold : -q.threshold;
  BnbSearch s(ctx, c, 0.0);
  s.sat_mode = true;
  s.sat_threshold = thr;
  s.seed_incumbent(0x5a7c0de);
  if (!s.out.sat) s.run();
  if (s.out.sat) return SatResult::Sat;
  if (s.out.budget_hit) return SatResult::Unknown;
  return SatResult::Unsat;
}

BisectionResult bisection_bounds(const Network& net, const Vec& x, const PerturbationSpec& spec,
                                 const VerifyOptions& opts) {
  if (opts.tol <= 0) throw std::invalid_argument("tol must be > 0");
  auto t0 = std::chrono::steady_clock::now();
  BoundsBox dual = output_box_dual(net, x, spec);
  Vec y0 = forward(net, x).y;
  int m = net.output_dim();
  BisectionResult res;
  res.box.y_min = Vec::Zero(m);
  res.box.y_max = Vec::Zero(m);
  res.box.tol = opts.tol;
  res.box.eps_v = spec.eps_v;
  for (int i = 0; i < m; ++i) {
    for (bool maximize : {false, true}) {
      double lo = maximize ? y0(i) : dual.y_min(i);
      double hi = maximize ? dual.y_max(i) : y0(i);
      long calls = 0;
      while (hi - lo > opts.tol) {
        double mid = 0.5 * (lo + hi);
        ReluQuery q{i, mid, maximize ? ReluQuery::Dir::Max : ReluQuery::Dir::Min};
        SatResult r = sat_query(net, x, spec, q, opts);
        ++calls;
        if (r == SatResult::Unknown) {
          res.box.complete = false;
          break;
        }
        bool sat = r == SatResult::Sat;
        // Min side: SAT(mid) means the true min <= mid. Max side: SAT(mid)
        // means the true max >= mid.
        if (maximize)
          (sat ? lo : hi) = mid;
        else
          (sat ? hi : lo) = mid;
      }
      double v = 0.5 * (lo + hi);
      if (maximize)
        res.box.y_max(i) = v;
      else
        res.box.y_min(i) = v;
      res.max_calls_per_bound = std::max(res.max_calls_per_bound, calls);
      res.total_calls += calls;
    }
  }
  res.box.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

GapReport compare_dual_exact(const std::vector<Network>& nets, const Mat& X,
                             const PerturbationSpec& spec, const VerifyOptions& opts) {
  GapReport rep;
  std::vector<GapRow> rows(nets.size());
  parallel_tasks((int)nets.size(), worker_count(opts.threads), [&](int i) {
    const Network& net = nets[(size_t)i];
    double sd = 0.0, se = 0.0;
    VerifyOptions seq = opts;
    seq.threads = 1;  // net-level parallelism only
    for (long s = 0; s < X.cols(); ++s) {
      sd += sensitivity(net, X.col(s), spec);
      ExactBox eb = exact_output_bounds(net, X.col(s), spec, seq);
      if (!eb.complete) throw std::runtime_error("compare_dual_exact: exact budget exceeded");
      se += eb.volume();
    }
    sd /= (double)X.cols();
    se /= (double)X.cols();
    GapRow row;
    row.net_index = i;
    row.s_dual = sd;
    row.s_exact = se;
    if (se == 0.0) {
      row.excluded = true;
    } else {
      row.gap = (sd - se) / se;
    }
    rows[(size_t)i] = row;
  });
  rep.rows = rows;
  std::vector<double> gaps;
  for (const auto& r : rep.rows) {
    if (r.excluded) {
      ++rep.excluded;
      continue;
    }
    gaps.push_back(r.gap);
  }
  if (!gaps.empty()) {
    std::sort(gaps.begin(), gaps.end());
    rep.median_gap = gaps[gaps.size() / 2];
    rep.max_gap = gaps.back();
  }
  return rep;
}

}  // namespace reachsense
