#include "reachsense/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace reachsense {

Method parse_method(const std::string& s) {
  if (s == "base") return Method::Base;
  if (s == "sm") return Method::SM;
  if (s == "jacobm") return Method::JacobM;
  if (s == "specm") return Method::SpecM;
  if (s == "kw") return Method::KW;
  throw std::invalid_argument("unknown training method: " + s);
}

std::string method_name(Method m) {
  switch (m) {
    case Method::Base: return "base";
    case Method::SM: return "sm";
    case Method::JacobM: return "jacobm";
    case Method::SpecM: return "specm";
    case Method::KW: return "kw";
  }
  return "?";
}

namespace {

// lambda2 * sum of squared Frobenius norms of the raw weight matrices /
// kernels; biases are not decayed.
ad::Value l2_term(AdNet& an, double lambda2) {
  ad::Value acc = an.tape->constant(Mat::Zero(1, 1));
  if (lambda2 == 0.0) return acc;
  for (auto& w : an.pW) acc = add(acc, sum_sq(w));
  return scale(acc, lambda2);
}

ad::Value ce_term(AdNet& an, const Batch& batch) {
  return softmax_cross_entropy(forward_graph(an, batch.X), batch.y);
}

}  // namespace

ad::Value loss_base_graph(ad::Tape&, AdNet& an, const Batch& batch, const LossParams& p) {
  return add(ce_term(an, batch), l2_term(an, p.lambda2));
}

ad::Value loss_sm_graph(ad::Tape& t, AdNet& an, const Batch& batch, const LossParams& p) {
  p.spec.validate(an.net->input_dim());
  ad::Value pen = t.constant(Mat::Zero(1, 1));
  for (int i = 0; i < batch.size(); ++i) {
    ad::Value x = t.constant(Mat(batch.X.col(i)));
    std::vector<ad::Value> lb, ub;
    compute_bounds(t, an.stack, x, p.spec.eps_v, lb, ub);
    ad::Value widths = sub(ub.back(), lb.back());
    ad::Value log_s = sum(log_shift(widths, p.delta));
    pen = add(pen, p.sm_penalty == SmPenalty::Product ? exp(log_s) : log_s);
  }
  pen = scale(pen, p.lambda / batch.size());
  return add(add(ce_term(an, batch), l2_term(an, p.lambda2)), pen);
}

ad::Value loss_jacobm_graph(ad::Tape& t, AdNet& an, const Batch& batch, const LossParams& p) {
  const int K = an.stack.layers();
  std::vector<Mat> Wv;
  std::vector<Vec> bv;
  for (int k = 0; k < K; ++k) {
    Wv.push_back(an.stack.W[(size_t)k].val());
    bv.push_back(an.stack.b[(size_t)k].val().col(0));
  }
  ad::Value pen = t.constant(Mat::Zero(1, 1));
  for (int i = 0; i < batch.size(); ++i) {
    // gates from the plain forward at the current weights, treated as
    // constants: the penalty differentiates the piecewise-linear Jacobian
    // on its current linear piece (gate 0 exactly at 0)
    Vec z = batch.X.col(i);
    ad::Value J{};
    for (int k = 0; k < K; ++k) {
      Vec pre = Wv[(size_t)k] * z + bv[(size_t)k];
      if (k == K - 1) {
        J = k == 0 ? an.stack.W[0] : matmul(an.stack.W[(size_t)k], J);
        break;
      }
      Mat gate(pre.size(), 1);
      for (long j = 0; j < pre.size(); ++j) gate(j, 0) = pre(j) > 0.0 ? 1.0 : 0.0;
      ad::Value masked = colwise_mul(an.stack.W[(size_t)k], t.constant(gate));
      J = k == 0 ? masked : matmul(masked, J);
      z = pre.cwiseMax(0.0);
    }
    pen = add(pen, sum_sq(J));
  }
  pen = scale(pen, p.lambda_j / batch.size());
  return add(add(ce_term(an, batch), l2_term(an, p.lambda2)), pen);
}

ad::Value loss_specm_graph(ad::Tape& t, AdNet& an, const Batch& batch, const LossParams& p,
                           PowerIterState& state) {
  const int K = an.stack.layers();
  if ((int)state.u.size() != K) {
    state.u.assign((size_t)K, Vec());
    state.v.assign((size_t)K, Vec());
    for (int k = 0; k < K; ++k) {
      long r = an.stack.W[(size_t)k].rows(), c = an.stack.W[(size_t)k].cols();
      state.u[(size_t)k] = Vec::Ones(r) / std::sqrt((double)r);
      state.v[(size_t)k] = Vec::Ones(c) / std::sqrt((double)c);
    }
  }
  ad::Value pen = t.constant(Mat::Zero(1, 1));
  for (int k = 0; k < K; ++k) {
    const Mat& W = an.stack.W[(size_t)k].val();
    Vec& u = state.u[(size_t)k];
    Vec& v = state.v[(size_t)k];
    for (int it = 0; it < p.power_iters; ++it) {
      v = W.transpose() * u;
      double nv = v.norm();
      if (nv > 0) v /= nv;
      u = W * v;
      double nu = u.norm();
      if (nu > 0) u /= nu;
    }
    // sigma ~= u^T W v with u, v frozen; gradient of sigma^2 is 2 sigma u v^T
    ad::Value s = matmul(matmul(t.constant(Mat(u.transpose())), an.stack.W[(size_t)k]),
                         t.constant(Mat(v)));
    pen = add(pen, sum_sq(s));
  }
  pen = scale(pen, p.lambda_s);
  return add(add(ce_term(an, batch), l2_term(an, p.lambda2)), pen);
}

ad::Value loss_kw_graph(ad::Tape& t, AdNet& an, const Batch& batch, const LossParams& p) {
  p.spec.validate(an.net->input_dim());
  const int m = an.net->output_dim();
  const int K = an.stack.layers();
  ad::Value acc = t.constant(Mat::Zero(1, 1));
  for (int i = 0; i < batch.size(); ++i) {
    int label = batch.y[(size_t)i];
    if (label < 0 || label >= m) throw std::invalid_argument("loss_kw: label out of range");
    ad::Value x = t.constant(Mat(batch.X.col(i)));
    std::vector<ad::Value> lb, ub;
    compute_bounds(t, an.stack, x, p.spec.eps_v, lb, ub, nullptr, K - 1);
    Mat C = Mat::Zero(m, m);  // column j: e_label - e_j (label column is zero)
    for (int j = 0; j < m; ++j)
      if (j != label) {
        C(label, j) += 1.0;
        C(j, j) -= 1.0;
      }
    ad::Value J = dual_lower(t, an.stack, K, x, p.spec.eps_v, C, lb, ub);
    // worst-case logits: v_j = -J_j, v_label = 0 by construction
    acc = add(acc, softmax_cross_entropy(neg(J), {label}));
  }
  return add(scale(acc, 1.0 / batch.size()), l2_term(an, p.lambda2));
}

LossGraphFn make_loss(Method m, const LossParams& p, PowerIterState* state) {
  switch (m) {
    case Method::Base:
      return [p](ad::Tape& t, AdNet& an, const Batch& b) { return loss_base_graph(t, an, b, p); };
    case Method::SM:
      return [p](ad::Tape& t, AdNet& an, const Batch& b) { return loss_sm_graph(t, an, b, p); };
    case Method::JacobM:
      return [p](ad::Tape& t, AdNet& an, const Batch& b) { return loss_jacobm_graph(t, an, b, p); };
    case Method::SpecM:
      if (!state) throw std::invalid_argument("make_loss: specm needs a PowerIterState");
      return [p, state](ad::Tape& t, AdNet& an, const Batch& b) {
        return loss_specm_graph(t, an, b, p, *state);
      };
    case Method::KW:
      return [p](ad::Tape& t, AdNet& an, const Batch& b) { return loss_kw_graph(t, an, b, p); };
  }
  throw std::invalid_argument("make_loss: bad method");
}

double loss_value(const LossGraphFn& fn, const Network& net, const Batch& batch) {
  ad::Tape tape;
  AdNet an = AdNet::build(tape, net);
  return fn(tape, an, batch).scalar();
}

}  // namespace reachsense
