#include "reachsense/train.hpp"

#include <stdexcept>

namespace reachsense {

void TrainingConfig::validate() const {
  if (lambda < 0 || lambda2 < 0 || lambda_j < 0 || lambda_s < 0)
    throw std::invalid_argument("loss weights must be >= 0");
  if (sigma < 0) throw std::invalid_argument("sigma must be >= 0");
  if (batch < 1) throw std::invalid_argument("batch size must be >= 1");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (optimizer != "sgd" && optimizer != "adam")
    throw std::invalid_argument("optimizer must be sgd or adam");
}

TrainResult train(const TrainingConfig& cfg, const Dataset& train_set, const Dataset& test_set) {
  cfg.validate();
  if (train_set.size() == 0) throw std::invalid_argument("train: empty training set");

  Network net = init_network(ArchDescriptor::parse(cfg.arch), cfg.seed);
  if (net.input_dim() != train_set.dim())
    throw std::invalid_argument("train: arch input dim does not match dataset");

  Vec d_hat = train_set.d_hat();
  PerturbationSpec eval_spec = PerturbationSpec::from_sigma(d_hat, cfg.sigma);

  LossParams p;
  p.lambda2 = cfg.lambda2;
  p.lambda = cfg.lambda;
  p.lambda_j = cfg.lambda_j;
  p.lambda_s = cfg.lambda_s;
  p.sm_penalty = cfg.sm_penalty;
  p.spec = eval_spec;

  OptimConfig opt = cfg.optimizer == "sgd" ? OptimConfig(SgdConfig{cfg.lr, cfg.momentum})
                                           : OptimConfig(AdamConfig{cfg.lr});
  OptimizerState ostate;
  PowerIterState pstate;

  TrainResult res{net, {}, eval_spec};
  auto log_metrics = [&](const Network& n, int epoch) {
    MetricRow tr = evaluate(n, train_set, eval_spec, cfg.eval);
    tr.epoch = epoch;
    tr.split = "train";
    tr.method = method_name(cfg.method);
    res.log.push_back(tr);
    if (test_set.size() > 0) {
      MetricRow te = evaluate(n, test_set, eval_spec, cfg.eval);
      te.epoch = epoch;
      te.split = "test";
      te.method = method_name(cfg.method);
      res.log.push_back(te);
    }
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto order = batch_indices(train_set.size(), cfg.batch, cfg.seed, epoch);
    for (size_t bi = 0; bi < order.size(); ++bi) {
      LossParams bp = p;
      if (cfg.method == Method::KW && cfg.kw_ramp && epoch == 0) {
        // warm start: epsilon grows linearly from 0 to sigma over epoch 1
        double frac = order.size() > 1 ? (double)bi / (double)(order.size() - 1) : 1.0;
        bp.spec = PerturbationSpec::from_sigma(d_hat, cfg.sigma * frac);
      }
      Batch batch = take_batch(train_set, order[bi]);
      LossAndGrad lg = gradient(make_loss(cfg.method, bp, &pstate), net, batch);
      net = optimizer_step(ostate, net, lg.grads, opt);
    }
    if (cfg.eval_every > 0 && ((epoch + 1) % cfg.eval_every == 0 || epoch == cfg.epochs - 1))
      log_metrics(net, epoch + 1);
  }
  if (res.log.empty()) log_metrics(net, cfg.epochs);
  res.net = net;
  return res;
}

}  // namespace reachsense
