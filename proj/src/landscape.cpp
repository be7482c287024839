#include "reachsense/landscape.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "reachsense/model_io.hpp"
#include "reachsense/verify.hpp"

namespace reachsense {

namespace {

double dot(const Vec& a, const Vec& b) { return a.dot(b); }

}  // namespace

LbfgsResult lbfgs_minimize(const ObjectiveFn& fn, Vec x0, const LbfgsOptions& opts) {
  const long n = x0.size();
  Vec x = std::move(x0), g(n);
  double f = fn(x, g);
  std::vector<Vec> S, Y;
  std::vector<double> rho;

  auto phi = [&](const Vec& xb, const Vec& d, double a, Vec& gout) {
    Vec xt = xb + a * d;
    double ft = fn(xt, gout);
    return ft;
  };

  // strong Wolfe line search (zoom), returns accepted step or 0 on failure
  auto line_search = [&](const Vec& xb, const Vec& d, double f0, double g0, Vec& g_out,
                         double& f_out) -> double {
    const double c1 = opts.c1, c2 = opts.c2;
    double a_prev = 0.0, f_prev = f0, a = 1.0;
    const double a_max = 1e6;
    Vec gt(n);
    auto zoom = [&](double lo, double flo, double hi, double fhi) -> double {
      for (int it = 0; it < 50; ++it) {
        double am = 0.5 * (lo + hi);
        double fm = phi(xb, d, am, gt);
        if (fm > f0 + c1 * am * g0 || fm >= flo) {
          hi = am;
          fhi = fm;
        } else {
          double gm = dot(gt, d);
          if (std::abs(gm) <= -c2 * g0) {
            f_out = fm;
            g_out = gt;
            return am;
          }
          if (gm * (hi - lo) >= 0) {
            hi = lo;
            fhi = flo;
          }
          lo = am;
          flo = fm;
        }
        if (std::abs(hi - lo) < 1e-16 * std::max(1.0, std::abs(lo))) break;
      }
      double fm = phi(xb, d, lo, gt);
      if (fm < f0 + c1 * lo * g0) {
        f_out = fm;
        g_out = gt;
        return lo;
      }
      return 0.0;
    };
    for (int it = 0; it < 30; ++it) {
      double ft = phi(xb, d, a, gt);
      if (ft > f0 + c1 * a * g0 || (it > 0 && ft >= f_prev)) return zoom(a_prev, f_prev, a, ft);
      double gta = dot(gt, d);
      if (std::abs(gta) <= -c2 * g0) {
        f_out = ft;
        g_out = gt;
        return a;
      }
      if (gta >= 0) return zoom(a, ft, a_prev, f_prev);
      a_prev = a;
      f_prev = ft;
      a = std::min(2.0 * a, a_max);
    }
    return 0.0;
  };

  LbfgsResult res;
  int it = 0;
  int stalled = 0;
  for (; it < opts.max_iters; ++it) {
    double ginf = g.size() ? g.cwiseAbs().maxCoeff() : 0.0;
    if (ginf <= opts.grad_tol) {
      res.converged = true;
      break;
    }
    // two-loop recursion
    Vec q = g;
    const int m = (int)S.size();
    std::vector<double> alpha((size_t)m);
    for (int i = m - 1; i >= 0; --i) {
      alpha[(size_t)i] = rho[(size_t)i] * dot(S[(size_t)i], q);
      q -= alpha[(size_t)i] * Y[(size_t)i];
    }
    if (m > 0) {
      double gamma = dot(S.back(), Y.back()) / dot(Y.back(), Y.back());
      q *= gamma;
    }
    for (int i = 0; i < m; ++i) {
      double beta = rho[(size_t)i] * dot(Y[(size_t)i], q);
      q += (alpha[(size_t)i] - beta) * S[(size_t)i];
    }
    Vec d = -q;
    double g0 = dot(g, d);
    if (!(g0 < 0)) {  // not a descent direction: reset to steepest descent
      S.clear();
      Y.clear();
      rho.clear();
      d = -g;
      g0 = dot(g, d);
      if (!(g0 < 0)) break;
    }
    Vec g_new(n);
    double f_new = 0.0;
    double a = line_search(x, d, f, g0, g_new, f_new);
    if (a == 0.0) {
      // strong Wolfe failed; fall back to plain Armijo backtracking so flat
      // valleys still make progress instead of stalling
      double at = 1.0;
      for (int bt = 0; bt < 60 && a == 0.0; ++bt, at *= 0.5) {
        double ft = phi(x, d, at, g_new);
        if (ft <= f + opts.c1 * at * g0) {
          a = at;
          f_new = ft;
        }
      }
      if (a == 0.0) {
        if (m == 0) break;  // dead even on steepest descent
        S.clear();
        Y.clear();
        rho.clear();
        continue;
      }
    }
    Vec s = a * d;
    Vec yv = g_new - g;
    double sy = dot(s, yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      S.push_back(s);
      Y.push_back(yv);
      rho.push_back(1.0 / sy);
      if ((int)S.size() > opts.memory) {
        S.erase(S.begin());
        Y.erase(Y.begin());
        rho.erase(rho.begin());
      }
    }
    // stuck on a kink: stop burning budget once f stops moving
    stalled = f - f_new <= 1e-14 * std::max(1.0, std::abs(f)) ? stalled + 1 : 0;
    x += s;
    f = f_new;
    g = g_new;
    if (stalled >= 200) break;
  }
  res.x = std::move(x);
  res.f = f;
  res.grad_inf = g.size() ? g.cwiseAbs().maxCoeff() : 0.0;
  res.iters = it;
  if (!res.converged) res.converged = res.grad_inf <= opts.grad_tol;
  return res;
}

ObjectiveFn dense_base_objective(const Network& proto, const Dataset& data, double lambda2) {
  struct Shape {
    long rows, cols;
    bool relu;
  };
  std::vector<Shape> shapes;
  for (int k = 0; k < proto.depth(); ++k) {
    if (proto.is_conv(k)) throw std::invalid_argument("dense_base_objective: conv layer present");
    shapes.push_back({proto.weight(k).rows(), proto.weight(k).cols(), proto.relu_after(k)});
  }
  Mat X = data.X;
  std::vector<int> y = data.y;
  return [shapes, X, y, lambda2](const Vec& w, Vec& g) {
    const int K = (int)shapes.size();
    const long N = X.cols();
    std::vector<Mat> W((size_t)K);
    std::vector<Vec> b((size_t)K);
    long pos = 0;
    for (int k = 0; k < K; ++k) {
      W[(size_t)k].resize(shapes[(size_t)k].rows, shapes[(size_t)k].cols);
      for (long r = 0; r < W[(size_t)k].rows(); ++r)
        for (long c = 0; c < W[(size_t)k].cols(); ++c) W[(size_t)k](r, c) = w(pos++);
      b[(size_t)k] = w.segment(pos, shapes[(size_t)k].rows);
      pos += shapes[(size_t)k].rows;
    }
    std::vector<Mat> post((size_t)K + 1);
    std::vector<Mat> pre((size_t)K);
    post[0] = X;
    for (int k = 0; k < K; ++k) {
      pre[(size_t)k] = (W[(size_t)k] * post[(size_t)k]).colwise() + b[(size_t)k];
      post[(size_t)k + 1] =
          shapes[(size_t)k].relu ? pre[(size_t)k].cwiseMax(0.0) : pre[(size_t)k];
    }
    const Mat& logits = pre[(size_t)K - 1];
    double loss = 0.0;
    Mat dPre(logits.rows(), N);
    for (long i = 0; i < N; ++i) {
      Vec col = logits.col(i);
      double mx = col.maxCoeff();
      Vec ex = (col.array() - mx).exp();
      double se = ex.sum();
      loss += mx + std::log(se) - col(y[(size_t)i]);
      dPre.col(i) = ex / se;
      dPre(y[(size_t)i], i) -= 1.0;
    }
    loss /= (double)N;
    dPre /= (double)N;
    g.resize(w.size());
    std::vector<Mat> gW((size_t)K);
    std::vector<Vec> gb((size_t)K);
    for (int k = K - 1; k >= 0; --k) {
      gW[(size_t)k] = dPre * post[(size_t)k].transpose() + 2.0 * lambda2 * W[(size_t)k];
      gb[(size_t)k] = dPre.rowwise().sum();
      loss += lambda2 * W[(size_t)k].squaredNorm();
      if (k > 0) {
        Mat dZ = W[(size_t)k].transpose() * dPre;
        if (shapes[(size_t)k - 1].relu)
          dZ = (pre[(size_t)k - 1].array() > 0.0).cast<double>() * dZ.array();
        dPre = std::move(dZ);
      }
    }
    pos = 0;
    for (int k = 0; k < K; ++k) {
      for (long r = 0; r < gW[(size_t)k].rows(); ++r)
        for (long c = 0; c < gW[(size_t)k].cols(); ++c) g(pos++) = gW[(size_t)k](r, c);
      g.segment(pos, gb[(size_t)k].size()) = gb[(size_t)k];
      pos += gb[(size_t)k].size();
    }
    return loss;
  };
}

MinimaDB sample_minima(const std::string& arch, const Dataset& data, double lambda2,
                       int n_restarts, const HopConfig& hop, uint64_t seed,
                       const LbfgsOptions& lbfgs, int threads) {
  if (n_restarts < 1) throw std::invalid_argument("sample_minima: need at least one restart");
  if (lambda2 < 0) throw std::invalid_argument("sample_minima: lambda2 must be >= 0");
  ArchDescriptor ad = ArchDescriptor::parse(arch);
  Network proto = init_network(ad, 0);
  Batch full{data.X, data.y};
  LossParams p;
  p.lambda2 = lambda2;
  LossGraphFn base = make_loss(Method::Base, p);

  bool all_dense = true;
  for (const auto& L : proto.layers())
    if (std::holds_alternative<ConvLayer>(L)) all_dense = false;
  ObjectiveFn energy;
  if (all_dense) {
    energy = dense_base_objective(proto, data, lambda2);
  } else {
    energy = [&, base](const Vec& w, Vec& g) {
      LossAndGrad lg = gradient(base, with_weights(proto, w), full);
      g = lg.grads.flatten();
      return lg.value;
    };
  }

  struct RestartOut {
    std::vector<Minimum> found;
    int dropped = 0;
  };
  std::vector<RestartOut> outs((size_t)n_restarts);

  auto run_restart = [&](int r) {
    uint64_t rs = seed ^ (0x9e3779b97f4a7c15ull * (uint64_t)(r + 1));
    std::mt19937_64 rng(rs ^ 0xba51f0ffull);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    RestartOut& out = outs[(size_t)r];

    auto record = [&](const LbfgsResult& lr) {
      if (!lr.converged) {
        ++out.dropped;
        return false;
      }
      Minimum m;
      m.weights = lr.x;
      m.energy = lr.f;
      m.grad_inf = lr.grad_inf;
      m.error_percent = top1_error_percent(with_weights(proto, lr.x), data.X, data.y);
      m.seed = rs;
      out.found.push_back(std::move(m));
      return true;
    };

    Vec x = flatten_weights(init_network(ad, rs));
    LbfgsResult cur = lbfgs_minimize(energy, x, lbfgs);
    record(cur);
    for (int h = 0; h < hop.hops; ++h) {
      double rms = std::sqrt(cur.x.squaredNorm() / (double)cur.x.size());
      Vec xp = cur.x;
      for (long i = 0; i < xp.size(); ++i) xp(i) += hop.scale * rms * gauss(rng);
      LbfgsResult trial = lbfgs_minimize(energy, xp, lbfgs);
      if (!record(trial)) continue;
      double dE = trial.f - cur.f;
      if (dE <= 0 || unif(rng) < std::exp(-dE / hop.temperature)) cur = trial;
    }
  };

  int workers = std::min(worker_count(threads), n_restarts);
  if (workers <= 1) {
    for (int r = 0; r < n_restarts; ++r) run_restart(r);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int t = 0; t < workers; ++t)
      pool.emplace_back([&] {
        for (int r = next.fetch_add(1); r < n_restarts; r = next.fetch_add(1)) run_restart(r);
      });
    for (auto& th : pool) th.join();
  }

  MinimaDB db;
  db.arch = arch;
  db.lambda2 = lambda2;
  for (auto& o : outs) {
    db.dropped += o.dropped;
    for (auto& m : o.found) db.minima.push_back(std::move(m));
  }
  return dedup_minima(db, db.dedup_tol);
}

MinimaDB dedup_minima(const MinimaDB& db, double tol_energy) {
  if (tol_energy <= 0) throw std::invalid_argument("dedup_minima: tolerance must be > 0");
  std::vector<int> order((int)db.minima.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return db.minima[(size_t)a].energy < db.minima[(size_t)b].energy;
  });
  MinimaDB out;
  out.dedup_tol = tol_energy;
  out.arch = db.arch;
  out.lambda2 = db.lambda2;
  out.dropped = db.dropped;
  double last = -std::numeric_limits<double>::infinity();
  for (int i : order) {
    const Minimum& m = db.minima[(size_t)i];
    if (m.energy - last > tol_energy) {
      out.minima.push_back(m);
      last = m.energy;
    }
  }
  return out;
}

namespace {

std::vector<double> ranks_with_ties(const std::vector<double>& v) {
  const int n = (int)v.size();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return v[(size_t)a] < v[(size_t)b]; });
  std::vector<double> r((size_t)n);
  int i = 0;
  while (i < n) {
    int j = i;
    while (j + 1 < n && v[(size_t)order[(size_t)j + 1]] == v[(size_t)order[(size_t)i]]) ++j;
    double avg = 0.5 * (i + j) + 1.0;  // averaged 1-based rank
    for (int k = i; k <= j; ++k) r[(size_t)order[(size_t)k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman_rho(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  std::vector<double> ra = ranks_with_ties(a), rb = ranks_with_ties(b);
  double ma = 0, mb = 0;
  for (size_t i = 0; i < ra.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= (double)ra.size();
  mb /= (double)rb.size();
  double num = 0, da = 0, dbb = 0;
  for (size_t i = 0; i < ra.size(); ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    da += (ra[i] - ma) * (ra[i] - ma);
    dbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (da == 0 || dbb == 0) return std::numeric_limits<double>::quiet_NaN();
  return num / std::sqrt(da * dbb);
}

std::vector<StudyResult> energy_sensitivity_study(MinimaDB& db, const Dataset& data,
                                                  const std::vector<double>& sigmas,
                                                  int subset_size, uint64_t subset_seed,
                                                  int threads) {
  if (db.minima.empty()) throw std::invalid_argument("energy_sensitivity_study: empty db");
  if (subset_size < 1) throw std::invalid_argument("energy_sensitivity_study: empty subset");
  std::vector<int> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(subset_seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize((size_t)std::min<int>(subset_size, data.size()));
  std::sort(idx.begin(), idx.end());
  Dataset sub = subset(data, idx);
  Vec d_hat = data.d_hat();

  for (auto& m : db.minima) m.sens.assign(sigmas.size(), 0.0);
  const int n = (int)db.minima.size();

  std::vector<StudyResult> results;
  for (size_t si = 0; si < sigmas.size(); ++si) {
    PerturbationSpec spec = PerturbationSpec::from_sigma(d_hat, sigmas[si]);
    StudyResult sr;
    sr.sigma = sigmas[si];
    sr.subset_size = sub.size();
    sr.rows.resize((size_t)n);

    auto run_one = [&](int i) {
      Network net = minimum_network(db, db.minima[(size_t)i]);
      double ssub = 0, sfull = 0;
      for (int k = 0; k < sub.size(); ++k) ssub += sensitivity(net, sub.X.col(k), spec);
      for (int k = 0; k < data.size(); ++k) sfull += sensitivity(net, data.X.col(k), spec);
      StudyRow& row = sr.rows[(size_t)i];
      row.index = i;
      row.energy = db.minima[(size_t)i].energy;
      row.sens_subset = ssub / sub.size();
      row.sens_full = sfull / data.size();
      db.minima[(size_t)i].sens[si] = row.sens_full;
    };
    int workers = std::min(worker_count(threads), n);
    if (workers <= 1) {
      for (int i = 0; i < n; ++i) run_one(i);
    } else {
      std::vector<std::thread> pool;
      std::atomic<int> next{0};
      for (int t = 0; t < workers; ++t)
        pool.emplace_back([&] {
          for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) run_one(i);
        });
      for (auto& th : pool) th.join();
    }

    std::vector<double> e, s_sub, s_full;
    for (const auto& r : sr.rows) {
      e.push_back(r.energy);
      s_sub.push_back(r.sens_subset);
      s_full.push_back(r.sens_full);
    }
    sr.rho_subset = spearman_rho(e, s_sub);
    sr.rho_full = spearman_rho(e, s_full);
    sr.defined = n >= 2 && std::isfinite(sr.rho_subset) && std::isfinite(sr.rho_full);
    results.push_back(std::move(sr));
  }
  return results;
}

Network minimum_network(const MinimaDB& db, const Minimum& m) {
  return with_weights(init_network(ArchDescriptor::parse(db.arch), 0), m.weights);
}

namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void save_minima_db(const MinimaDB& db, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream index(dir + "/index.csv");
  if (!index) throw std::runtime_error("cannot write " + dir + "/index.csv");
  index << "file,energy,grad_inf,error_percent,seed,sens\n";
  for (size_t i = 0; i < db.minima.size(); ++i) {
    const Minimum& m = db.minima[i];
    char name[32];
    std::snprintf(name, sizeof name, "minimum_%04zu.rsnm", i);
    json meta;
    meta["energy"] = m.energy;
    meta["grad_inf"] = m.grad_inf;
    meta["error_percent"] = m.error_percent;
    meta["seed"] = m.seed;
    meta["sens"] = m.sens;
    meta["arch"] = db.arch;
    meta["lambda2"] = db.lambda2;
    meta["dedup_tol"] = db.dedup_tol;
    meta["dropped"] = db.dropped;
    save_model(minimum_network(db, m), dir + "/" + name, meta);
    index << name << "," << g17(m.energy) << "," << g17(m.grad_inf) << ","
          << g17(m.error_percent) << "," << m.seed << ",";
    for (size_t k = 0; k < m.sens.size(); ++k) index << (k ? ";" : "") << g17(m.sens[k]);
    index << "\n";
  }
  if (!index) throw std::runtime_error("write failure on " + dir + "/index.csv");
}

MinimaDB load_minima_db(const std::string& dir) {
  std::ifstream index(dir + "/index.csv");
  if (!index) throw std::runtime_error("cannot open " + dir + "/index.csv");
  MinimaDB db;
  std::string line;
  std::getline(index, line);  // header
  bool first = true;
  while (std::getline(index, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string file;
    std::getline(ss, file, ',');
    LoadedModel lm = load_model(dir + "/" + file);
    Minimum m;
    m.weights = flatten_weights(lm.net);
    m.energy = lm.metadata.at("energy").get<double>();
    m.grad_inf = lm.metadata.at("grad_inf").get<double>();
    m.error_percent = lm.metadata.at("error_percent").get<double>();
    m.seed = lm.metadata.at("seed").get<uint64_t>();
    m.sens = lm.metadata.at("sens").get<std::vector<double>>();
    if (first) {
      db.arch = lm.metadata.at("arch").get<std::string>();
      db.lambda2 = lm.metadata.at("lambda2").get<double>();
      db.dedup_tol = lm.metadata.at("dedup_tol").get<double>();
      db.dropped = lm.metadata.at("dropped").get<int>();
      first = false;
    }
    db.minima.push_back(std::move(m));
  }
  return db;
}

}  // namespace reachsense
