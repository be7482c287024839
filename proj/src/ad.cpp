#include "reachsense/ad.hpp"

#include <cmath>

namespace reachsense::ad {

const Mat& Value::val() const { return tape->value_of(idx); }
const Mat& Value::grad() const { return tape->grad_of(idx); }

double Value::scalar() const {
  const Mat& m = val();
  if (m.rows() != 1 || m.cols() != 1) throw std::invalid_argument("scalar() on non-1x1 value");
  return m(0, 0);
}

Value Tape::node(Mat value) {
  if (!value.allFinite()) throw std::runtime_error("non-finite value entering tape at node " + std::to_string(nodes_.size()));
  auto n = std::make_unique<Node>();
  n->val = std::move(value);
  nodes_.push_back(std::move(n));
  return Value{this, (int)nodes_.size() - 1};
}

void Tape::backward(const Value& root) {
  if (root.tape != this) throw std::invalid_argument("backward: root from another tape");
  const Mat& rv = nodes_[root.idx]->val;
  if (rv.rows() != 1 || rv.cols() != 1) throw std::invalid_argument("backward: root must be scalar");
  for (auto& n : nodes_) n->grad = Mat::Zero(n->val.rows(), n->val.cols());
  nodes_[root.idx]->grad(0, 0) = 1.0;
  for (int i = root.idx; i >= 0; --i) {
    if (nodes_[i]->back) nodes_[i]->back();
  }
}

namespace {

void check_same_tape(const Value& a, const Value& b) {
  if (a.tape != b.tape) throw std::invalid_argument("values from different tapes");
}

}  // namespace

Value matmul(Value a, Value b) {
  check_same_tape(a, b);
  Tape* t = a.tape;
  Value out = t->node(a.val() * b.val());
  int ai = a.idx, bi = b.idx, oi = out.idx;
  t->set_backfn(oi, [t, ai, bi, oi]() {
    const Mat& g = t->grad_of(oi);
    t->grad_ref(ai) += g * t->value_of(bi).transpose();
    t->grad_ref(bi) += t->value_of(ai).transpose() * g;
  });
  return out;
}

Value add(Value a, Value b) {
  check_same_tape(a, b);
  Tape* t = a.tape;
  Value out = t->node(a.val() + b.val());
  int ai = a.idx, bi = b.idx, oi = out.idx;
  t->set_backfn(oi, [t, ai, bi, oi]() {
    t->grad_ref(ai) += t->grad_of(oi);
    t->grad_ref(bi) += t->grad_of(oi);
  });
  return out;
}

Value sub(Value a, Value b) {
  check_same_tape(a, b);
  Tape* t = a.tape;
  Value out = t->node(a.val() - b.val());
  int ai = a.idx, bi = b.idx, oi = out.idx;
  t->set_backfn(oi, [t, ai, bi, oi]() {
    t->grad_ref(ai) += t->grad_of(oi);
    t->grad_ref(bi) -= t->grad_of(oi);
  });
  return out;
}

Value neg(Value a) {
  Tape* t = a.tape;
  Value out = t->node(-a.val());
  int ai = a.idx, oi = out.idx;
  t->set_backfn(oi, [t, ai, oi]() { t->grad_ref(ai) -= t->grad_of(oi); });
  return out;
}

Value transpose(Value a) {
  Tape* t = a.tape;
  Value out = t->node(a.val().transpose());
  int ai = a.idx, oi = out.idx;
  t->set_backfn(oi, [t, ai, oi]() { t->grad_ref(ai) += t->grad_of(oi).transpose(); });
  return out;
}

Value cwise_mul(Value a, Value b) {
  check_same_tape(a, b);
  Tape* t = a.tape;
  Value out = t->node(a.val().cwiseProduct(b.val()));
  int ai = a.idx, bi = b.idx, oi = out.idx;
  t->set_backfn(oi, [t, ai, bi, oi]() {
    const Mat& g = t->grad_of(oi);
    t->grad_ref(ai) += g.cwiseProduct(t->value_of(bi));
    t->grad_ref(bi) += g.cwiseProduct(t->value_of(ai));
  });
  return out;
}

Value cwise_div(Value a, Value b) {
  check_same_tape(a, b);
  Tape* t = a.tape;
  Value out = t->node(a.val().cwiseQuotient(b.val()));
  int ai = a.idx, bi = b.idx, oi = out.idx;
  t->set_backfn(oi, [t, ai, bi, oi]() {
    const Mat& g = t->grad_of(oi);
    const Mat& bv = t->value_of(bi);
    t->grad_ref(ai) += g.cwiseQuotient(bv);
    t->grad_ref(bi) -= g.cwiseProduct(t->value_of(oi)).cwiseQuotient(bv);
  });
  return out;
}

Value cmul_const(Value a, const Mat& m) {
  Tape* t = a.tape;
  Value out = t->node(a.val().cwiseProduct(m));
  int ai = a.idx, oi = out.idx;
  Mat mc = m;
  t->set_backfn(oi, [t, ai, oi, mc]() { t->grad_ref(ai) += t->grad_of(oi).cwiseProduct(mc); });
  return out;
}

Value cadd_const(Value a, const Mat& m) {
  Tape* t = a.tape;
  Value out = t->node(a.val() + m);
  int ai = a.idx, oi = out.idx;
  t->set_backfn(oi, [t, ai, oi]() { t->grad_ref(ai) += t->grad_of(oi); });
  return out;
}

Value colwise_add(Value a, Value v) {
  check_same_tape(a, v);
  Tape* t = a.tape;
  Mat out = a.val();
  out.colwise() += Vec(v.val());
  Value o = t->node(std::move(out));
  int ai = a.idx, vi = v.idx, oi = o.idx;
  t->set_backfn(oi, [t, ai, vi, oi]() {
    const Mat& g = t->grad_of(oi);
    t->grad_ref(ai) += g;
    t->grad_ref(vi) += g.rowwise().sum();
  });
  return o;
}

Value colwise_mul(Value a, Value v) {
  check_same_tape(a, v);
  Tape* t = a.tape;
  Mat out = a.val().array().colwise() * v.val().col(0).array();
  Value o = t->node(std::move(out));
  int ai = a.idx, vi = v.idx, oi = o.idx;
  t->set_backfn(oi, [t, ai, vi, oi]() {
    const Mat& g = t->grad_of(oi);
    const Mat& av = t->value_of(ai);
    const Mat& vv = t->value_of(vi);
    t->grad_ref(ai) += (g.array().colwise() * vv.col(0).array()).matrix();
    t->grad_ref(vi) += g.cwiseProduct(av).rowwise().sum();
  });
  return o;
}

Value relu(Value a) {
  Tape* t = a.tape;
  Value out = t->node(a.val().cwiseMax(0.0));
  int ai = a.idx, oi = out.idx;
  t->set_backfn(oi, [t, ai, oi]() {
    const Mat& av = t->value_of(ai);
    Mat gate = (av.array() > 0.0).cast<double>();
    t->grad_ref(ai) += t->grad_of(oi).cwiseProduct(gate);
  });
  return out;
}

Value abs(Value a) {
  Tape* t = a.tape;
  Value out = t->node(a.val().cwiseAbs());
  int ai = a.idx, oi = out.idx;
  t->set_backfn(oi, [t, ai, oi]() {
    const Mat& av = t->value_of(ai);
    Mat sgn = (av.array() > 0.0).cast<double>() - (av.array() < 0.0).cast<double>();
    t->grad_ref(ai) += t->grad_of(oi).cwiseProduct(sgn);
  });
  return out;
}

Value log_shift(Value a, double delta) {
  Tape* t = a.tape;
  Value out = t->node((a.val().array() + delta).log().matrix());
  int ai = a.idx, oi = out.idx;
  t->set_backfn(oi, [t, ai, oi, delta]() {
    const Mat& av = t->value_of(ai);
    t->grad_ref(ai) += (t->grad_of(oi).array() / (av.array() + delta)).matrix();
  });
  return out;
}

Value exp(Value a) {
  Tape* t = a.tape;
  Value out = t->node(a.val().array().exp().matrix());
  int ai = a.idx, oi = out.idx;
  t->set_backfn(oi, [t, ai, oi]() {
    t->grad_ref(ai) += t->grad_of(oi).cwiseProduct(t->value_of(oi));
  });
  return out;
}

Value scale(Value a, double s) {
  Tape* t = a.tape;
  Value out = t->node(a.val() * s);
  int ai = a.idx, oi = out.idx;
  t->set_backfn(oi, [t, ai, oi, s]() { t->grad_ref(ai) += t->grad_of(oi) * s; });
  return out;
}

Value sum(Value a) {
  Tape* t = a.tape;
  Mat s(1, 1);
  s(0, 0) = a.val().sum();
  Value out = t->node(std::move(s));
  int ai = a.idx, oi = out.idx;
  t->set_backfn(oi, [t, ai, oi]() {
    t->grad_ref(ai).array() += t->grad_of(oi)(0, 0);
  });
  return out;
}

Value sum_sq(Value a) {
  Tape* t = a.tape;
  Mat s(1, 1);
  s(0, 0) = a.val().squaredNorm();
  Value out = t->node(std::move(s));
  int ai = a.idx, oi = out.idx;
  t->set_backfn(oi, [t, ai, oi]() {
    t->grad_ref(ai) += 2.0 * t->grad_of(oi)(0, 0) * t->value_of(ai);
  });
  return out;
}

Value softmax_cross_entropy(Value logits, const std::vector<int>& labels) {
  Tape* t = logits.tape;
  const Mat& z = logits.val();
  int m = (int)z.rows(), B = (int)z.cols();
  if ((int)labels.size() != B) throw std::invalid_argument("softmax_cross_entropy: label count mismatch");
  double total = 0.0;
  for (int c = 0; c < B; ++c) {
    if (labels[c] < 0 || labels[c] >= m) throw std::invalid_argument("softmax_cross_entropy: label out of range");
    double mx = z.col(c).maxCoeff();
    double lse = std::log((z.col(c).array() - mx).exp().sum()) + mx;
    total += lse - z(labels[c], c);
  }
  Mat s(1, 1);
  s(0, 0) = total / B;
  Value out = t->node(std::move(s));
  int li = logits.idx, oi = out.idx;
  std::vector<int> labs = labels;
  t->set_backfn(oi, [t, li, oi, labs]() {
    const Mat& z = t->value_of(li);
    int m = (int)z.rows(), B = (int)z.cols();
    double g = t->grad_of(oi)(0, 0) / B;
    Mat& zg = t->grad_ref(li);
    for (int c = 0; c < B; ++c) {
      double mx = z.col(c).maxCoeff();
      Vec e = (z.col(c).array() - mx).exp();
      Vec p = e / e.sum();
      zg.col(c) += g * p;
      zg(labs[c], c) -= g;
    }
    (void)m;
  });
  return out;
}

Value lower_params(Value params, const LoweringMap& map) {
  Tape* t = params.tape;
  const Mat& p = params.val();
  Mat out = Mat::Zero(map.out_rows, map.out_cols);
  for (const auto& tr : map.triples) out(tr[0], tr[1]) += p(tr[2]);
  Value o = t->node(std::move(out));
  int pi = params.idx, oi = o.idx;
  const LoweringMap* mp = &map;
  // the map must outlive the tape; callers keep it alive alongside the network
  t->set_backfn(oi, [t, pi, oi, mp]() {
    const Mat& g = t->grad_of(oi);
    Mat& pg = t->grad_ref(pi);
    for (const auto& tr : mp->triples) pg(tr[2]) += g(tr[0], tr[1]);
  });
  return o;
}

}  // namespace reachsense::ad
