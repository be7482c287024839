#pragma once

// Dual bound propagation, generic over the matrix kind: instantiated with
// plain Eigen matrices for verification/metrics and with ad::Value for the
// differentiable training losses. The two instantiations share one
// implementation so the trained quantity and the reported quantity agree.
//
// Convention: a network prefix of K weighted layers computes
//   z_0 = x,  zhat_i = W_i z_i + b_i,  z_{i+1} = relu(zhat_i)  (i < K-1),
// and the prefix output is zhat_{K-1}. dual_lower() returns, per column c
// of C, a certified lower bound on min_{x in box} c^T zhat_{K-1}.

#include <cstdint>
#include <vector>

#include "reachsense/ad.hpp"

namespace reachsense {

// -- plain-Eigen counterparts of the ad:: primitives -------------------------

struct EigenCtx {};

inline const Mat& eval(const Mat& m) { return m; }
inline const Mat& eval(const ad::Value& v) { return v.val(); }

inline Mat make_const(EigenCtx&, Mat m) { return m; }
inline ad::Value make_const(ad::Tape& t, Mat m) { return t.constant(std::move(m)); }

inline Mat matmul(const Mat& a, const Mat& b) { return a * b; }
inline Mat add(const Mat& a, const Mat& b) { return a + b; }
inline Mat sub(const Mat& a, const Mat& b) { return a - b; }
inline Mat neg(const Mat& a) { return -a; }
inline Mat transpose(const Mat& a) { return a.transpose(); }
inline Mat cwise_mul(const Mat& a, const Mat& b) { return a.cwiseProduct(b); }
inline Mat cwise_div(const Mat& a, const Mat& b) { return a.cwiseQuotient(b); }
inline Mat cmul_const(const Mat& a, const Mat& m) { return a.cwiseProduct(m); }
inline Mat cadd_const(const Mat& a, const Mat& m) { return a + m; }
inline Mat colwise_mul(const Mat& a, const Mat& v) {
  return (a.array().colwise() * v.col(0).array()).matrix();
}
inline Mat relu(const Mat& a) { return a.cwiseMax(0.0); }
inline Mat abs(const Mat& a) { return a.cwiseAbs(); }

// -- generic affine stack ----------------------------------------------------

template <class M>
struct StackT {
  std::vector<M> W;  // weighted layer matrices, already fused/lowered
  std::vector<M> b;  // matching biases, column vectors
  int layers() const { return (int)W.size(); }
};

// Per ReLU layer i (i.e. after weighted layer i), per neuron:
// -1 forced inactive, +1 forced active, 0 free.
using ActOverride = std::vector<std::vector<int8_t>>;

namespace detail {

struct NeuronMasks {
  Mat pos, neg, uns;  // 0/1 column vectors
};

inline NeuronMasks classify(const Mat& l, const Mat& u, const std::vector<int8_t>* ov) {
  long n = l.rows();
  NeuronMasks m{Mat::Zero(n, 1), Mat::Zero(n, 1), Mat::Zero(n, 1)};
  for (long j = 0; j < n; ++j) {
    int8_t o = ov ? (*ov)[(size_t)j] : int8_t(0);
    if (o > 0 || (o == 0 && l(j, 0) >= 0.0))
      m.pos(j, 0) = 1.0;
    else if (o < 0 || u(j, 0) <= 0.0)
      m.neg(j, 0) = 1.0;
    else
      m.uns(j, 0) = 1.0;
  }
  return m;
}

}  // namespace detail

// Certified lower bounds on the columns of C against zhat_{K-1} of the
// prefix of K weighted layers. lb/ub must hold pre-activation bounds for
// weighted layers 0..K-2 at least.
template <class Ctx, class M>
M dual_lower(Ctx& ctx, const StackT<M>& st, int K, const M& x, const Vec& eps_v, const Mat& C,
             const std::vector<M>& lb, const std::vector<M>& ub,
             const ActOverride* overrides = nullptr, std::vector<M>* nu_out = nullptr) {
  const int q = (int)C.cols();
  M acc = make_const(ctx, Mat::Zero(q, 1));
  M V = neg(make_const(ctx, C));
  M eps = make_const(ctx, Mat(eps_v));
  if (nu_out) nu_out->push_back(V);
  for (int i = K - 1; i >= 0; --i) {
    acc = sub(acc, matmul(transpose(V), st.b[(size_t)i]));
    M Vhat = matmul(transpose(st.W[(size_t)i]), V);
    if (i == 0) {
      if (nu_out) nu_out->push_back(Vhat);
      acc = sub(acc, matmul(transpose(Vhat), x));
      acc = sub(acc, matmul(transpose(abs(Vhat)), eps));
      break;
    }
    const M& l = lb[(size_t)(i - 1)];
    const M& u = ub[(size_t)(i - 1)];
    const std::vector<int8_t>* ov =
        overrides && (size_t)(i - 1) < overrides->size() ? &(*overrides)[(size_t)(i - 1)] : nullptr;
    detail::NeuronMasks mk = detail::classify(eval(l), eval(u), ov);
    // d = 1 for active, 0 for inactive, u/(u-l) for unstable; the stable
    // entries get a unit denominator so no 0/0 leaks through the mask.
    M denom = cadd_const(sub(u, l), Mat(mk.pos + mk.neg));
    M d = cadd_const(cmul_const(cwise_div(u, denom), mk.uns), mk.pos);
    M nu = colwise_mul(Vhat, d);
    if (nu_out) nu_out->push_back(nu);
    acc = add(acc, matmul(transpose(relu(nu)), cmul_const(l, mk.uns)));
    V = nu;
  }
  return acc;
}

// Pre-activation bounds for every weighted layer, layer 0 exact over the
// box, deeper layers via the dual applied to the corresponding prefix.
template <class Ctx, class M>
void compute_bounds(Ctx& ctx, const StackT<M>& st, const M& x, const Vec& eps_v,
                    std::vector<M>& lb, std::vector<M>& ub, const ActOverride* overrides = nullptr,
                    int upto = -1) {
  lb.clear();
  ub.clear();
  const int K = upto < 0 ? st.layers() : upto;
  M eps = make_const(ctx, Mat(eps_v));
  for (int k = 0; k < K; ++k) {
    if (k == 0) {
      M pre = add(matmul(st.W[0], x), st.b[0]);
      M r = matmul(abs(st.W[0]), eps);
      lb.push_back(sub(pre, r));
      ub.push_back(add(pre, r));
      continue;
    }
    long nk = eval(st.b[(size_t)k]).rows();
    Mat I = Mat::Identity(nk, nk);
    lb.push_back(dual_lower(ctx, st, k + 1, x, eps_v, I, lb, ub, overrides));
    ub.push_back(neg(dual_lower(ctx, st, k + 1, x, eps_v, Mat(-I), lb, ub, overrides)));
  }
}

// Plain-Eigen stack from a Network (conv layers lowered, affine runs fused).
class Network;
StackT<Mat> make_stack(const Network& net);

}  // namespace reachsense
