#include "reachsense/grads.hpp"

#include <cmath>
#include <stdexcept>

namespace reachsense {

Vec Gradients::flatten() const {
  long total = 0;
  for (size_t k = 0; k < dW.size(); ++k) total += dW[k].size() + db[k].size();
  Vec out(total);
  long pos = 0;
  for (size_t k = 0; k < dW.size(); ++k) {
    const Mat& g = dW[k];
    for (long r = 0; r < g.rows(); ++r)
      for (long c = 0; c < g.cols(); ++c) out(pos++) = g(r, c);
    for (long i = 0; i < db[k].size(); ++i) out(pos++) = db[k](i);
  }
  return out;
}

double Gradients::inf_norm() const {
  double m = 0.0;
  for (const auto& g : dW) m = std::max(m, g.size() ? g.cwiseAbs().maxCoeff() : 0.0);
  for (const auto& g : db) m = std::max(m, g.size() ? g.cwiseAbs().maxCoeff() : 0.0);
  return m;
}

bool Gradients::finite() const {
  for (const auto& g : dW)
    if (!g.allFinite()) return false;
  for (const auto& g : db)
    if (!g.allFinite()) return false;
  return true;
}

AdNet AdNet::build(ad::Tape& tape, const Network& net) {
  AdNet an;
  an.tape = &tape;
  an.net = &net;

  // Lowered per-weighted-layer (W, b) nodes, then the same fusing rule as
  // make_stack so the tape stack and the Eigen stack are index-compatible.
  std::vector<ad::Value> loW, lob;
  int w = 0;
  for (const auto& L : net.layers()) {
    if (const auto* a = std::get_if<AffineLayer>(&L)) {
      ad::Value vW = tape.variable(a->W);
      ad::Value vb = tape.variable(Mat(a->b));
      an.pW.push_back(vW);
      an.pb.push_back(vb);
      loW.push_back(vW);
      lob.push_back(vb);
      ++w;
    } else if (const auto* c = std::get_if<ConvLayer>(&L)) {
      ad::Value vk = tape.variable(Mat(c->kernel));
      ad::Value vb = tape.variable(Mat(c->bias));
      an.pW.push_back(vk);
      an.pb.push_back(vb);
      const LoweredConv& lo = net.lowered(w);  // maps must outlive the tape
      loW.push_back(ad::lower_params(vk, lo.weight_map));
      lob.push_back(ad::lower_params(vb, lo.bias_map));
      ++w;
    }
  }

  ad::Value W, b;
  bool pending = false;
  for (int k = 0; k < net.depth(); ++k) {
    if (!pending) {
      W = loW[(size_t)k];
      b = lob[(size_t)k];
    } else {
      b = add(matmul(loW[(size_t)k], b), lob[(size_t)k]);
      W = matmul(loW[(size_t)k], W);
    }
    pending = true;
    if (net.relu_after(k) || k == net.depth() - 1) {
      an.stack.W.push_back(W);
      an.stack.b.push_back(b);
      pending = false;
    }
  }
  return an;
}

Gradients AdNet::read_grads() const {
  Gradients g;
  for (size_t k = 0; k < pW.size(); ++k) {
    const Mat& gw = pW[k].grad();
    const Mat& gb = pb[k].grad();
    g.dW.push_back(gw.size() ? gw : Mat(Mat::Zero(pW[k].rows(), pW[k].cols())));
    g.db.push_back(gb.size() ? Vec(gb.col(0)) : Vec(Vec::Zero(pb[k].rows())));
  }
  return g;
}

ad::Value forward_graph(const AdNet& an, const Mat& X) {
  ad::Tape& t = *an.tape;
  if ((int)X.rows() != an.net->input_dim())
    throw std::invalid_argument("forward_graph: input dim mismatch");
  ad::Value z = t.constant(X);
  const int K = an.stack.layers();
  for (int k = 0; k < K; ++k) {
    try {
      z = colwise_add(matmul(an.stack.W[(size_t)k], z), an.stack.b[(size_t)k]);
      if (k < K - 1) z = relu(z);
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("forward_graph: non-finite value at weighted layer " +
                               std::to_string(k) + " (" + e.what() + ")");
    }
  }
  return z;
}

LossAndGrad gradient(const LossGraphFn& fn, const Network& net, const Batch& batch) {
  if ((int)batch.y.size() != batch.size())
    throw std::invalid_argument("gradient: label count does not match batch columns");
  ad::Tape tape;
  AdNet an = AdNet::build(tape, net);
  ad::Value loss = fn(tape, an, batch);
  if (loss.rows() != 1 || loss.cols() != 1)
    throw std::invalid_argument("gradient: loss graph must produce a scalar");
  tape.backward(loss);
  LossAndGrad out;
  out.value = loss.scalar();
  out.grads = an.read_grads();
  return out;
}

double finite_diff_check(const LossGraphFn& fn, const Network& net, const Batch& batch, double h) {
  Vec analytic = gradient(fn, net, batch).grads.flatten();
  Vec w0 = flatten_weights(net);
  if (analytic.size() != w0.size())
    throw std::logic_error("finite_diff_check: gradient/parameter size mismatch");
  auto value_at = [&](const Vec& w) {
    ad::Tape tape;
    Network n = with_weights(net, w);
    AdNet an = AdNet::build(tape, n);
    return fn(tape, an, batch).scalar();
  };
  double worst = 0.0;
  for (long i = 0; i < w0.size(); ++i) {
    Vec wp = w0, wm = w0;
    wp(i) += h;
    wm(i) -= h;
    double central = (value_at(wp) - value_at(wm)) / (2.0 * h);
    double a = analytic(i);
    double rel = std::abs(a - central) / (std::abs(a) + std::abs(central) + 1e-12);
    worst = std::max(worst, rel);
  }
  return worst;
}

Mat input_jacobian(const Network& net, const Vec& x) {
  StackT<Mat> st = make_stack(net);
  Mat z = x;
  Mat J = Mat::Identity(net.input_dim(), net.input_dim());
  for (int k = 0; k < st.layers(); ++k) {
    Mat pre = st.W[(size_t)k] * z + st.b[(size_t)k];
    J = st.W[(size_t)k] * J;
    if (k < st.layers() - 1) {
      for (long j = 0; j < pre.rows(); ++j)
        if (pre(j, 0) <= 0.0) J.row(j).setZero();
      z = pre.cwiseMax(0.0);
    }
  }
  return J;
}

}  // namespace reachsense
