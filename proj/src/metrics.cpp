#include "reachsense/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include <Eigen/SVD>

namespace reachsense {

double top1_error_percent(const Network& net, const Mat& X, const std::vector<int>& labels) {
  if (X.cols() == 0) throw std::invalid_argument("top1_error_percent: empty sample set");
  Mat Y = forward_batch(net, X);
  long wrong = 0;
  for (long i = 0; i < X.cols(); ++i) {
    int lab = labels[(size_t)i];
    // in error if any other class ties or beats the true logit
    for (long j = 0; j < Y.rows(); ++j)
      if (j != lab && Y(j, i) >= Y(lab, i)) {
        ++wrong;
        break;
      }
  }
  // same rounding shape as 100 * certified_error so the eps = 0 identity
  // ADV_ERR == ERR holds bit-exactly
  return 100.0 * ((double)wrong / (double)X.cols());
}

double mean_cross_entropy(const Network& net, const Mat& X, const std::vector<int>& labels) {
  if (X.cols() == 0) throw std::invalid_argument("mean_cross_entropy: empty sample set");
  Mat Y = forward_batch(net, X);
  double total = 0.0;
  for (long i = 0; i < X.cols(); ++i) {
    Vec col = Y.col(i);
    double mx = col.maxCoeff();
    double lse = mx + std::log((col.array() - mx).exp().sum());
    total += lse - col(labels[(size_t)i]);
  }
  return total / (double)X.cols();
}

MetricRow evaluate(const Network& net, const Dataset& data, const PerturbationSpec& spec,
                   const EvalOptions& opts) {
  if (data.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  spec.validate(net.input_dim());
  MetricRow row;
  row.ce = mean_cross_entropy(net, data.X, data.y);
  row.err = top1_error_percent(net, data.X, data.y);

  std::vector<int> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (data.size() > opts.sense_subset) {
    std::mt19937_64 rng(opts.subset_seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize((size_t)opts.sense_subset);
    std::sort(idx.begin(), idx.end());
  }
  Dataset sub = subset(data, idx);

  double sense = 0.0, jacob = 0.0, adv_loss = 0.0;
  for (int i = 0; i < sub.size(); ++i) {
    Vec x = sub.X.col(i);
    sense += sensitivity(net, x, spec);
    jacob += input_jacobian(net, x).squaredNorm();
    adv_loss += robust_loss(net, x, sub.y[(size_t)i], spec);
  }
  row.sense = sense / sub.size();
  row.jacob = jacob / sub.size();
  row.adv_loss = adv_loss / sub.size();
  row.adv_err = 100.0 * certified_error(net, sub.X, sub.y, spec);

  StackT<Mat> st = make_stack(net);
  for (const Mat& W : st.W) {
    double smax = Eigen::JacobiSVD<Mat>(W).singularValues()(0);
    row.spectral += smax * smax;
  }
  return row;
}

}  // namespace reachsense
