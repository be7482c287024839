#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "reachsense/losses.hpp"

using namespace reachsense;

namespace {

Batch random_batch(int dim, int n, int classes, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1, 1);
  Batch b;
  b.X.resize(dim, n);
  for (long i = 0; i < b.X.size(); ++i) b.X(i / n, i % n) = d(rng);
  for (int i = 0; i < n; ++i) b.y.push_back((int)(rng() % (uint64_t)classes));
  return b;
}

// finite differences are only meaningful away from the ReLU kinks: demand a
// margin on every pre-activation and on the perturbation-box bounds so the
// +/-h sweeps stay on one linear piece
bool kink_free(const Network& net, const Batch& b, const PerturbationSpec& spec, double margin) {
  for (int i = 0; i < b.size(); ++i) {
    ForwardTrace tr = forward(net, b.X.col(i));
    for (const Vec& p : tr.pre)
      if (p.cwiseAbs().minCoeff() < margin) return false;
    PreactBounds pb = preactivation_bounds(net, b.X.col(i), spec);
    for (size_t k = 0; k < pb.lower.size(); ++k)
      if (pb.lower[k].cwiseAbs().minCoeff() < margin || pb.upper[k].cwiseAbs().minCoeff() < margin)
        return false;
  }
  return true;
}

double plain_ce(const Network& net, const Batch& b) {
  Mat logits = forward_batch(net, b.X);
  double acc = 0;
  for (int i = 0; i < b.size(); ++i) {
    Vec col = logits.col(i);
    double mx = col.maxCoeff();
    acc += mx + std::log((col.array() - mx).exp().sum()) - col(b.y[(size_t)i]);
  }
  return acc / b.size();
}

}  // namespace

TEST_CASE("method names round trip") {
  for (Method m : {Method::Base, Method::SM, Method::JacobM, Method::SpecM, Method::KW})
    CHECK(parse_method(method_name(m)) == m);
  CHECK_THROWS(parse_method("bogus"));
}

TEST_CASE("every regularizer collapses to plain cross entropy at weight zero") {
  Network net = init_network(ArchDescriptor::parse("3-6-4-3"), 11);
  Batch b = random_batch(3, 6, 3, 1);
  double ce = plain_ce(net, b);

  LossParams p;
  p.lambda2 = 0;
  p.lambda = 0;
  p.lambda_j = 0;
  p.lambda_s = 0;
  p.spec = PerturbationSpec::uniform(3, 0.05);
  PowerIterState st;
  for (Method m : {Method::Base, Method::SM, Method::JacobM, Method::SpecM})
    CHECK(std::abs(loss_value(make_loss(m, p, &st), net, b) - ce) <= 1e-12);
}

TEST_CASE("all five losses pass finite differences on jittered instances") {
  LossParams p;
  p.lambda2 = 0.001;
  p.lambda = 1e-3;
  p.lambda_j = 0.01;
  p.lambda_s = 0.01;
  p.power_iters = 50;  // fully converged, so the state is a fixed point
  p.spec = PerturbationSpec::uniform(3, 0.03);
  int done = 0;
  for (uint64_t s = 0; done < 6 && s < 200; ++s) {
    Network net = init_network(ArchDescriptor::parse("3-5-4-3"), 100 + s);
    Batch b = random_batch(3, 5, 3, 200 + s);
    if (!kink_free(net, b, p.spec, 1e-3)) continue;  // jitter to a smooth instance
    ++done;
    PowerIterState st;
    CHECK(finite_diff_check(make_loss(Method::Base, p), net, b) < 1e-4);
    CHECK(finite_diff_check(make_loss(Method::SM, p), net, b) < 1e-4);
    CHECK(finite_diff_check(make_loss(Method::JacobM, p), net, b) < 1e-4);
    CHECK(finite_diff_check(make_loss(Method::SpecM, p, &st), net, b) < 1e-4);
    CHECK(finite_diff_check(make_loss(Method::KW, p), net, b) < 1e-4);
  }
  CHECK(done == 6);
}

TEST_CASE("sm equals base plus the mean log sensitivity") {
  Network net = init_network(ArchDescriptor::parse("3-5-3"), 17);
  Batch b = random_batch(3, 4, 3, 2);
  LossParams p;
  p.lambda2 = 0.01;
  p.lambda = 0.5;
  p.spec = PerturbationSpec::uniform(3, 0.05);
  double base = loss_value(make_loss(Method::Base, p), net, b);
  double sm = loss_value(make_loss(Method::SM, p), net, b);
  double mean_logs = 0;
  for (int i = 0; i < b.size(); ++i) mean_logs += log_sensitivity(net, b.X.col(i), p.spec);
  mean_logs /= b.size();
  CHECK(sm == doctest::Approx(base + p.lambda * mean_logs).epsilon(1e-10));

  // the product surrogate uses plain sensitivity instead
  p.sm_penalty = SmPenalty::Product;
  double smp = loss_value(make_loss(Method::SM, p), net, b);
  double mean_s = 0;
  for (int i = 0; i < b.size(); ++i) mean_s += sensitivity(net, b.X.col(i), p.spec);
  mean_s /= b.size();
  CHECK(smp == doctest::Approx(base + p.lambda * mean_s).epsilon(1e-10));
}

TEST_CASE("jacobm penalty equals the mean squared jacobian norm") {
  Network net = init_network(ArchDescriptor::parse("3-6-2"), 19);
  Batch b = random_batch(3, 5, 2, 3);
  LossParams p;
  p.lambda2 = 0;
  p.lambda_j = 0.25;
  double base = plain_ce(net, b);
  double jm = loss_value(make_loss(Method::JacobM, p), net, b);
  double mean_j = 0;
  for (int i = 0; i < b.size(); ++i)
    mean_j += input_jacobian(net, b.X.col(i)).squaredNorm();
  mean_j /= b.size();
  CHECK(jm == doctest::Approx(base + p.lambda_j * mean_j).epsilon(1e-10));
}

TEST_CASE("specm power iteration tracks the true spectral norms") {
  Network net = init_network(ArchDescriptor::parse("4-8-6-3"), 23);
  Batch b = random_batch(4, 4, 3, 4);
  LossParams p;
  p.lambda2 = 0;
  p.lambda_s = 1.0;
  p.power_iters = 30;  // enough rounds to converge from cold start
  PowerIterState st;
  double sv = loss_value(make_loss(Method::SpecM, p, &st), net, b);
  double truth = plain_ce(net, b);
  for (int k = 0; k < net.depth(); ++k) {
    Eigen::JacobiSVD<Mat> svd(net.weight(k));
    truth += svd.singularValues()(0) * svd.singularValues()(0);
  }
  CHECK(sv == doctest::Approx(truth).epsilon(1e-6));
  CHECK_THROWS(loss_value(make_loss(Method::SpecM, p, nullptr), net, b));
}

TEST_CASE("kw at epsilon zero is plain cross entropy") {
  for (uint64_t s = 0; s < 10; ++s) {
    Network net = init_network(ArchDescriptor::parse("3-5-4-3"), 300 + s);
    Batch b = random_batch(3, 6, 3, 400 + s);
    LossParams p;
    p.lambda2 = 0;
    p.spec = PerturbationSpec::uniform(3, 0.0);
    double kw = loss_value(make_loss(Method::KW, p), net, b);
    CHECK(std::abs(kw - plain_ce(net, b)) <= 1e-12);
  }
}

TEST_CASE("kw equals the mean dual robust loss") {
  Network net = init_network(ArchDescriptor::parse("3-5-3"), 29);
  Batch b = random_batch(3, 5, 3, 5);
  LossParams p;
  p.lambda2 = 0;
  p.spec = PerturbationSpec::uniform(3, 0.04);
  double kw = loss_value(make_loss(Method::KW, p), net, b);
  double mean_rl = 0;
  for (int i = 0; i < b.size(); ++i) mean_rl += robust_loss(net, b.X.col(i), b.y[(size_t)i], p.spec);
  mean_rl /= b.size();
  CHECK(kw == doctest::Approx(mean_rl).epsilon(1e-10));
  // with weight decay it shifts by the l2 term
  p.lambda2 = 0.01;
  double l2 = 0;
  for (int k = 0; k < net.depth(); ++k) l2 += net.weight(k).squaredNorm();
  CHECK(loss_value(make_loss(Method::KW, p), net, b) ==
        doctest::Approx(mean_rl + p.lambda2 * l2).epsilon(1e-10));
}
