#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "reachsense/optim.hpp"

using namespace reachsense;

TEST_CASE("sgd step is lr times gradient") {
  Vec w(2), g(2);
  w << 1.0, -2.0;
  g << 0.5, -1.0;
  OptimizerState st;
  optimizer_step(st, w, g, SgdConfig{0.1, 0.0});
  CHECK(w(0) == doctest::Approx(0.95));
  CHECK(w(1) == doctest::Approx(-1.9));
  CHECK(st.t == 1);
}

TEST_CASE("sgd momentum accumulates") {
  Vec w = Vec::Zero(1), g = Vec::Ones(1);
  OptimizerState st;
  SgdConfig cfg{0.1, 0.9};
  optimizer_step(st, w, g, cfg);   // v = 1,   w = -0.1
  optimizer_step(st, w, g, cfg);   // v = 1.9, w = -0.29
  CHECK(w(0) == doctest::Approx(-0.29));
}

TEST_CASE("adam matches the hand-computed first steps") {
  Vec w = Vec::Zero(1), g(1);
  g << 2.0;
  AdamConfig cfg;
  OptimizerState st;
  optimizer_step(st, w, g, cfg);
  // m=0.2, v=0.004; mhat=2, vhat=4; step = lr * 2/(2+eps)
  double expect1 = -cfg.lr * 2.0 / (2.0 + cfg.eps);
  CHECK(w(0) == doctest::Approx(expect1).epsilon(1e-12));
  optimizer_step(st, w, g, cfg);
  double m = 0.9 * 0.2 + 0.1 * 2.0, v = 0.999 * 0.004 + 0.001 * 4.0;
  double mh = m / (1 - std::pow(0.9, 2)), vh = v / (1 - std::pow(0.999, 2));
  CHECK(w(0) == doctest::Approx(expect1 - cfg.lr * mh / (std::sqrt(vh) + cfg.eps)).epsilon(1e-12));
  CHECK(st.t == 2);
}

TEST_CASE("state is allocated lazily and shapes are enforced") {
  Vec w = Vec::Zero(3), g = Vec::Ones(3);
  OptimizerState st;
  CHECK(st.m.size() == 0);
  optimizer_step(st, w, g, AdamConfig{});
  CHECK(st.m.size() == 3);
  CHECK(st.v.size() == 3);
  Vec bad = Vec::Ones(2);
  CHECK_THROWS(optimizer_step(st, w, bad, AdamConfig{}));
}

TEST_CASE("non-finite gradients abort") {
  Vec w = Vec::Zero(2), g(2);
  g << 1.0, std::nan("");
  OptimizerState st;
  CHECK_THROWS(optimizer_step(st, w, g, SgdConfig{0.1, 0.0}));
}

TEST_CASE("network wrapper matches the flat step") {
  Network net = init_network(ArchDescriptor::parse("3-4-2"), 9);
  Batch b;
  b.X = Mat::Random(3, 5);
  b.y = {0, 1, 0, 1, 1};
  LossGraphFn ce = [](ad::Tape& t, AdNet& an, const Batch& batch) {
    return ad::softmax_cross_entropy(forward_graph(an, batch.X), batch.y);
  };
  LossAndGrad lg = gradient(ce, net, b);

  OptimizerState s1, s2;
  Network stepped = optimizer_step(s1, net, lg.grads, AdamConfig{});
  Vec w = flatten_weights(net);
  Vec g = lg.grads.flatten();
  optimizer_step(s2, w, g, AdamConfig{});
  CHECK((flatten_weights(stepped) - w).cwiseAbs().maxCoeff() == 0.0);
}
