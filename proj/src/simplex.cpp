#include "reachsense/simplex.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace reachsense {

namespace {

class Tableau {
 public:
  // Columns: n structural, m slack, na artificial, then rhs.
  Tableau(const Vec& c, const Mat& A, const Vec& b, const LpOptions& opt)
      : n_((int)c.size()), m_((int)b.size()), opt_(opt), c_(c) {
    std::vector<int> art_rows;
    for (int i = 0; i < m_; ++i)
      if (b(i) < 0) art_rows.push_back(i);
    na_ = (int)art_rows.size();
    int cols = n_ + m_ + na_ + 1;
    T_ = Mat::Zero(m_ + 1, cols);
    basis_.resize(m_);
    int a = 0;
    for (int i = 0; i < m_; ++i) {
      double s = b(i) < 0 ? -1.0 : 1.0;
      T_.block(i, 0, 1, n_) = s * A.row(i);
      T_(i, n_ + i) = s;  // slack
      T_(i, cols - 1) = s * b(i);
      if (b(i) < 0) {
        T_(i, n_ + m_ + a) = 1.0;
        basis_[i] = n_ + m_ + a;
        ++a;
      } else {
        basis_[i] = n_ + i;
      }
    }
    max_iter_ = opt.max_iter > 0 ? opt.max_iter : 2000 + 50L * (n_ + m_);
  }

  LpResult solve() {
    if (na_ > 0) {
      // Phase I: minimize the sum of artificials.
      set_objective_artificial();
      LpStatus st = iterate(true);
      if (st == LpStatus::IterLimit) return {st, 0.0, {}};
      if (T_(m_, cols() - 1) < -opt_.feas_tol) return {LpStatus::Infeasible, 0.0, {}};
      if (!evict_artificials()) return {LpStatus::Infeasible, 0.0, {}};
    }
    set_objective_phase2();
    LpStatus st = iterate(false);
    if (st != LpStatus::Optimal) return {st, 0.0, {}};
    Vec x = Vec::Zero(n_);
    for (int i = 0; i < m_; ++i)
      if (basis_[i] < n_) x(basis_[i]) = T_(i, cols() - 1);
    return {LpStatus::Optimal, c_.dot(x), x};
  }

 private:
  int cols() const { return (int)T_.cols(); }
  int allowed_cols() const { return n_ + m_; }  // artificials never re-enter

  void set_objective_artificial() {
    T_.row(m_).setZero();
    for (int j = n_ + m_; j < cols() - 1; ++j) T_(m_, j) = 1.0;
    price_out();
  }

  void set_objective_phase2() {
    T_.row(m_).setZero();
    T_.block(m_, 0, 1, n_) = c_.transpose();
    price_out();
  }

  void price_out() {
    for (int i = 0; i < m_; ++i) {
      double cb = T_(m_, basis_[i]);
      if (cb != 0.0) T_.row(m_) -= cb * T_.row(i);
    }
  }

  void pivot(int row, int col) {
    T_.row(row) /= T_(row, col);
    for (int i = 0; i <= m_; ++i) {
      if (i == row) continue;
      double f = T_(i, col);
      if (f != 0.0) T_.row(i) -= f * T_.row(row);
    }
    basis_[row] = col;
  }

  LpStatus iterate(bool phase1) {
    long iter = 0;
    long bland_after = 500 + 10L * (n_ + m_);
    while (true) {
      if (++iter > max_iter_) return LpStatus::IterLimit;
      bool bland = iter > bland_after;
      int enter = -1;
      double best = -opt_.opt_tol;
      for (int j = 0; j < allowed_cols(); ++j) {
        double rc = T_(m_, j);
        if (rc < best) {
          enter = j;
          if (bland) break;  // first improving index
          best = rc;
        } else if (bland && rc < -opt_.opt_tol) {
          enter = j;
          break;
        }
      }
      if (enter < 0) return LpStatus::Optimal;
      int leave = -1;
      double best_ratio = std::numeric_limits<double>::infinity();
      for (int i = 0; i < m_; ++i) {
        double a = T_(i, enter);
        if (a > opt_.feas_tol) {
          double ratio = T_(i, cols() - 1) / a;
          if (ratio < best_ratio - 1e-12 ||
              (ratio < best_ratio + 1e-12 && (leave < 0 || basis_[i] < basis_[leave]))) {
            best_ratio = ratio;
            leave = i;
          }
        }
      }
      if (leave < 0) return phase1 ? LpStatus::Infeasible : LpStatus::Unbounded;
      pivot(leave, enter);
    }
  }

  // After phase I: pivot any basic artificial (at value 0) onto a real
  // column; a row whose real coefficients are all zero is redundant.
  bool evict_artificials() {
    for (int i = 0; i < m_; ++i) {
      if (basis_[i] < n_ + m_) continue;
      if (std::abs(T_(i, cols() - 1)) > opt_.feas_tol) return false;
      int piv = -1;
      for (int j = 0; j < allowed_cols(); ++j) {
        if (std::abs(T_(i, j)) > 1e-9) {
          piv = j;
          break;
        }
      }
      if (piv >= 0) {
        pivot(i, piv);
      } else {
        T_.row(i).setZero();  // redundant row, keep it inert
        T_(i, basis_[i]) = 1.0;
      }
    }
    return true;
  }

  int n_, m_, na_ = 0;
  LpOptions opt_;
  Vec c_;
  Mat T_;
  std::vector<int> basis_;
  long max_iter_ = 0;
};

}  // namespace

LpResult solve_lp(const Vec& c, const Mat& A, const Vec& b, const LpOptions& opt) {
  if (A.rows() != b.size() || A.cols() != c.size())
    throw std::invalid_argument("solve_lp: inconsistent dimensions");
  Tableau t(c, A, b, opt);
  return t.solve();
}

LpResult solve_box_lp(const Vec& c, const Mat& G, const Vec& h, const Vec& lo, const Vec& hi,
                      const LpOptions& opt) {
  int n = (int)c.size();
  if (lo.size() != n || hi.size() != n) throw std::invalid_argument("solve_box_lp: box size mismatch");
  if (((hi - lo).array() < 0).any()) return {LpStatus::Infeasible, 0.0, {}};
  // shift x = lo + s, append s <= hi - lo
  long mg = G.rows();
  Mat A(mg + n, n);
  Vec b(mg + n);
  A.topRows(mg) = G;
  b.head(mg) = h - G * lo;
  A.bottomRows(n) = Mat::Identity(n, n);
  b.tail(n) = hi - lo;
  LpResult r = solve_lp(c, A, b, opt);
  if (r.status == LpStatus::Optimal) {
    r.x = r.x + lo;
    r.value = c.dot(r.x);
  }
  return r;
}

}  // namespace reachsense
