// Command-line front end: training, verification, sensitivity, landscape
// study, dual-vs-exact comparison, MILP export, synthetic data generation,
// and manifest-driven re-runs.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "reachsense/landscape.hpp"
#include "reachsense/milp_export.hpp"
#include "reachsense/model_io.hpp"
#include "reachsense/report.hpp"
#include "reachsense/train.hpp"
#include "reachsense/verify.hpp"

namespace rs = reachsense;
using nlohmann::json;

namespace {

rs::Dataset load_dataset(const std::string& kind, const std::string& path, const std::string& split) {
  if (kind == "iris") return rs::load_iris(path);
  if (kind == "mnist") {
    std::string stem = split == "test" ? "t10k" : "train";
    return rs::load_mnist(path + "/" + stem + "-images-idx3-ubyte",
                          path + "/" + stem + "-labels-idx1-ubyte");
  }
  throw std::runtime_error("unknown dataset kind: " + kind + " (want iris or mnist)");
}

int run_train(const json& cfg, const std::string& out_dir) {
  rs::TrainingConfig tc;
  tc.arch = cfg.at("arch").get<std::string>();
  tc.method = rs::parse_method(cfg.at("method").get<std::string>());
  tc.lambda = cfg.value("lambda", tc.lambda);
  tc.lambda2 = cfg.value("lambda2", tc.lambda2);
  tc.lambda_j = cfg.value("lambda_j", tc.lambda_j);
  tc.lambda_s = cfg.value("lambda_s", tc.lambda_s);
  tc.sigma = cfg.value("sigma", tc.sigma);
  tc.optimizer = cfg.value("optimizer", tc.optimizer);
  tc.lr = cfg.value("lr", tc.lr);
  tc.epochs = cfg.value("epochs", tc.epochs);
  tc.batch = cfg.value("batch", tc.batch);
  tc.seed = cfg.value("seed", tc.seed);
  tc.eval_every = cfg.value("eval_every", tc.eval_every);
  tc.eval.sense_subset = cfg.value("eval_subset", tc.eval.sense_subset);
  if (cfg.value("sm_penalty", std::string("log")) == "product")
    tc.sm_penalty = rs::SmPenalty::Product;

  rs::Dataset train_set = load_dataset(cfg.at("dataset").get<std::string>(),
                                       cfg.at("data").get<std::string>(), "train");
  rs::Dataset test_set;
  if (cfg.at("dataset").get<std::string>() == "mnist") {
    test_set = load_dataset("mnist", cfg.at("data").get<std::string>(), "test");
  } else {
    auto split = rs::train_test_split(train_set, cfg.value("test_frac", 0.2), tc.seed);
    train_set = split.first;
    test_set = split.second;
  }

  rs::TrainResult res = rs::train(tc, train_set, test_set);
  std::filesystem::create_directories(out_dir);
  rs::write_metrics_csv(out_dir + "/metrics.csv", res.log);
  json meta;
  meta["config"] = cfg;
  rs::save_model(res.net, out_dir + "/model.rsnm", meta);
  rs::write_manifest(out_dir + "/manifest.json", cfg);

  std::vector<rs::SvgSeries> series;
  bool all_positive = true;
  for (const std::string split : {"train", "test"}) {
    rs::SvgSeries s;
    s.label = split + " SENSE";
    for (const auto& r : res.log)
      if (r.split == split) {
        s.x.push_back(r.epoch);
        s.y.push_back(r.sense);
        all_positive = all_positive && r.sense > 0;
      }
    if (!s.x.empty()) series.push_back(std::move(s));
  }
  rs::SvgOptions so;
  so.title = "sensitivity during training (" + rs::method_name(tc.method) + ")";
  so.xlabel = "epoch";
  so.ylabel = "SENSE";
  so.log_y = all_positive;  // sigma = 0 runs have exactly zero sensitivity
  rs::write_svg_plot(out_dir + "/sense.svg", series, so);

  const rs::MetricRow& last = res.log.back();
  std::cout << "final " << last.split << ": CE " << last.ce << "  ERR " << last.err << "%  SENSE "
            << last.sense << "  ADV_ERR " << last.adv_err << "%\n";
  std::cout << "wrote " << out_dir << "/{metrics.csv, model.rsnm, manifest.json, sense.svg}\n";
  return 0;
}

int run_landscape(const json& cfg, const std::string& out_dir) {
  rs::Dataset data = load_dataset(cfg.value("dataset", std::string("iris")),
                                  cfg.at("data").get<std::string>(), "train");
  rs::HopConfig hop;
  hop.hops = cfg.value("hops", hop.hops);
  hop.scale = cfg.value("hop_scale", hop.scale);
  hop.temperature = cfg.value("temperature", hop.temperature);
  rs::LbfgsOptions lbfgs;
  lbfgs.grad_tol = cfg.value("grad_tol", lbfgs.grad_tol);
  lbfgs.max_iters = cfg.value("lbfgs_iters", lbfgs.max_iters);
  rs::MinimaDB db = rs::sample_minima(cfg.at("arch").get<std::string>(), data,
                                      cfg.value("lambda2", 0.001), cfg.value("restarts", 100), hop,
                                      cfg.value("seed", (uint64_t)1), lbfgs, cfg.value("threads", 0));
  std::vector<double> sigmas = cfg.value("sigmas", std::vector<double>{0.05, 0.1, 0.2});
  auto studies = rs::energy_sensitivity_study(db, data, sigmas, cfg.value("subset", 30),
                                              cfg.value("subset_seed", (uint64_t)42),
                                              cfg.value("threads", 0));
  std::filesystem::create_directories(out_dir);
  rs::save_minima_db(db, out_dir + "/minima");

  std::vector<std::vector<std::string>> rows;
  for (const auto& st : studies)
    for (const auto& r : st.rows)
      rows.push_back({rs::csv_num(st.sigma), std::to_string(r.index), rs::csv_num(r.energy),
                      rs::csv_num(r.sens_subset), rs::csv_num(r.sens_full)});
  rs::write_csv(out_dir + "/study.csv", {"sigma", "minimum", "energy", "sens_subset", "sens_full"},
                rows);
  rs::write_manifest(out_dir + "/manifest.json", cfg);

  std::vector<rs::SvgSeries> series;
  bool all_positive = true;
  for (const auto& st : studies) {
    rs::SvgSeries s;
    s.scatter = true;
    s.label = "sigma=" + rs::csv_num(st.sigma) + "  rho=" + rs::csv_num(st.rho_full);
    for (const auto& r : st.rows) {
      s.x.push_back(r.energy);
      s.y.push_back(r.sens_full);
      all_positive = all_positive && r.sens_full > 0;
    }
    series.push_back(std::move(s));
  }
  rs::SvgOptions so;
  so.title = "sensitivity vs energy over sampled minima";
  so.xlabel = "energy";
  so.ylabel = "mean sensitivity";
  so.log_y = all_positive;  // all-stable minima can have exactly zero sensitivity
  rs::write_svg_plot(out_dir + "/study.svg", series, so);

  std::cout << db.minima.size() << " distinct minima (" << db.dropped << " non-convergent dropped)\n";
  for (const auto& st : studies)
    std::cout << "sigma " << st.sigma << ": spearman rho subset " << st.rho_subset << ", full "
              << st.rho_full << "\n";
  return 0;
}

int dispatch(const json& cfg);

int run_report(const std::string& manifest_path) {
  json cfg = rs::read_manifest(manifest_path);
  return dispatch(cfg);
}

int dispatch(const json& cfg) {
  std::string cmd = cfg.at("command").get<std::string>();
  std::string out = cfg.value("out", std::string("out"));
  if (cmd == "train") return run_train(cfg, out);
  if (cmd == "landscape") return run_landscape(cfg, out);
  throw std::runtime_error("manifest command not re-runnable: " + cmd);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reachability bounds, sensitivity, and robust training for ReLU networks"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  std::string data, dataset = "iris", arch = "4-8-3", method = "base", out = "out", model;
  std::string land_arch = "4-25-25-25-3";
  double land_lambda2 = 0.001;
  std::string config, sigmas_s = "0.05,0.1,0.2", optimizer = "adam", sm_penalty = "log";
  double lambda = 1e-6, lambda2 = 0.0, lambda_j = 0.01, lambda_s = 0.01, sigma = 0.05, lr = 1e-3;
  double tol = 1e-4, test_frac = 0.2, hop_scale = 0.5, temperature = 1.0, grad_tol = 1e-6;
  int lbfgs_iters = 5000;
  int epochs = 10, batch = 32, eval_subset = 512, restarts = 100, hops = 10, subset = 30;
  int index = 0, output = 0, samples = 25, threads = 0, n_train = 10000, n_test = 2000;
  uint64_t seed = 1, subset_seed = 42;
  bool maximize = false;

  auto add_data = [&](CLI::App* c, bool required = true) {
    auto* o = c->add_option("--data", data, "iris csv path or mnist idx directory");
    if (required) o->required();
    c->add_option("--dataset", dataset, "iris | mnist");
  };

  CLI::App* t = app.add_subcommand("train", "train a network with one of the loss methods");
  add_data(t);
  t->add_option("--arch", arch);
  t->add_option("--method", method, "base | sm | jacobm | specm | kw");
  t->add_option("--lambda", lambda);
  t->add_option("--lambda2", lambda2);
  t->add_option("--lambda-j", lambda_j);
  t->add_option("--lambda-s", lambda_s);
  t->add_option("--sigma", sigma);
  t->add_option("--optimizer", optimizer);
  t->add_option("--lr", lr);
  t->add_option("--epochs", epochs);
  t->add_option("--batch", batch);
  t->add_option("--seed", seed);
  t->add_option("--eval-subset", eval_subset);
  t->add_option("--test-frac", test_frac);
  t->add_option("--sm-penalty", sm_penalty, "log | product");
  t->add_option("--out", out);

  CLI::App* v = app.add_subcommand("verify", "exact vs dual output box for one sample");
  v->add_option("--model", model)->required();
  add_data(v);
  v->add_option("--index", index, "sample index");
  v->add_option("--sigma", sigma);
  v->add_option("--tol", tol);
  v->add_option("--threads", threads);

  CLI::App* s = app.add_subcommand("sense", "dual sensitivity over a dataset");
  s->add_option("--model", model)->required();
  add_data(s);
  s->add_option("--sigma", sigma);
  s->add_option("--out", out);

  CLI::App* l = app.add_subcommand("landscape", "sample minima and run the energy study");
  add_data(l);
  // landscape defaults differ from train's; separate variables, because
  // CLI11's default_val writes through the binding at registration time
  l->add_option("--arch", land_arch);
  l->add_option("--lambda2", land_lambda2);
  l->add_option("--restarts", restarts);
  l->add_option("--hops", hops);
  l->add_option("--hop-scale", hop_scale);
  l->add_option("--temperature", temperature);
  l->add_option("--grad-tol", grad_tol, "L-BFGS convergence threshold on |grad|_inf");
  l->add_option("--lbfgs-iters", lbfgs_iters);
  l->add_option("--seed", seed);
  l->add_option("--sigmas", sigmas_s, "comma-separated sigma list");
  l->add_option("--subset", subset);
  l->add_option("--subset-seed", subset_seed);
  l->add_option("--threads", threads);
  l->add_option("--out", out);

  CLI::App* c = app.add_subcommand("compare", "dual vs exact sensitivity gap over saved minima");
  c->add_option("--minima", model, "minima db directory")->required();
  add_data(c);
  c->add_option("--sigma", sigma);
  c->add_option("--samples", samples, "evaluation samples per net");
  c->add_option("--tol", tol);
  c->add_option("--threads", threads);
  c->add_option("--out", out);

  CLI::App* e = app.add_subcommand("export-milp", "write a big-M MILP in LP format");
  e->add_option("--model", model)->required();
  add_data(e);
  e->add_option("--index", index, "sample index");
  e->add_option("--sigma", sigma);
  e->add_option("--output", output, "objective output index");
  e->add_flag("--max", maximize, "maximize instead of minimize");
  e->add_option("--out", out);

  CLI::App* r = app.add_subcommand("report", "re-run a recorded manifest");
  r->add_option("--config", config, "manifest.json path")->required();

  CLI::App* m = app.add_subcommand("make-data", "generate an mnist-format synthetic dataset");
  m->add_option("--out", out)->required();
  m->add_option("--train", n_train);
  m->add_option("--test", n_test);
  m->add_option("--seed", seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (t->parsed()) {
      json cfg{{"command", "train"},   {"data", data},         {"dataset", dataset},
               {"arch", arch},         {"method", method},     {"lambda", lambda},
               {"lambda2", lambda2},   {"lambda_j", lambda_j}, {"lambda_s", lambda_s},
               {"sigma", sigma},       {"optimizer", optimizer}, {"lr", lr},
               {"epochs", epochs},     {"batch", batch},       {"seed", seed},
               {"eval_subset", eval_subset}, {"test_frac", test_frac},
               {"sm_penalty", sm_penalty},   {"out", out}};
      return run_train(cfg, out);
    }
    if (l->parsed()) {
      std::vector<double> sig;
      std::stringstream ss(sigmas_s);
      std::string tok;
      while (std::getline(ss, tok, ',')) sig.push_back(std::stod(tok));
      json cfg{{"command", "landscape"}, {"data", data},            {"dataset", dataset},
               {"arch", land_arch},      {"lambda2", land_lambda2}, {"restarts", restarts},
               {"hops", hops},           {"hop_scale", hop_scale}, {"temperature", temperature},
               {"seed", seed},           {"sigmas", sig},      {"subset", subset},
               {"subset_seed", subset_seed}, {"threads", threads}, {"out", out},
               {"grad_tol", grad_tol},   {"lbfgs_iters", lbfgs_iters}};
      return run_landscape(cfg, out);
    }
    if (v->parsed()) {
      rs::LoadedModel lm = rs::load_model(model);
      rs::Dataset d = load_dataset(dataset, data, "test");
      if (index < 0 || index >= d.size()) throw std::runtime_error("sample index out of range");
      Eigen::VectorXd x = d.X.col(index);
      rs::PerturbationSpec spec = rs::PerturbationSpec::from_sigma(d.d_hat(), sigma);
      rs::BoundsBox dual = rs::output_box_dual(lm.net, x, spec);
      rs::VerifyOptions vo;
      vo.tol = tol;
      vo.threads = threads;
      rs::ExactBox exact = rs::exact_output_bounds(lm.net, x, spec, vo);
      std::cout << (exact.complete ? "exact" : "INCOMPLETE (budget hit, dual fallback)")
                << " box after " << exact.nodes << " nodes, " << exact.seconds << "s\n";
      for (int i = 0; i < lm.net.output_dim(); ++i)
        std::cout << "y[" << i << "]  dual [" << dual.y_min(i) << ", " << dual.y_max(i)
                  << "]  exact [" << exact.y_min(i) << ", " << exact.y_max(i) << "]\n";
      std::cout << "S_dual " << dual.volume() << "  S_exact " << exact.volume() << "\n";
      return 0;
    }
    if (s->parsed()) {
      rs::LoadedModel lm = rs::load_model(model);
      rs::Dataset d = load_dataset(dataset, data, "test");
      rs::PerturbationSpec spec = rs::PerturbationSpec::from_sigma(d.d_hat(), sigma);
      double mean = 0;
      std::vector<std::vector<std::string>> rows;
      for (int i = 0; i < d.size(); ++i) {
        double si = rs::sensitivity(lm.net, d.X.col(i), spec);
        mean += si;
        rows.push_back({std::to_string(i), rs::csv_num(si)});
      }
      mean /= d.size();
      if (s->count("--out")) {
        std::filesystem::create_directories(out);
        rs::write_csv(out + "/sensitivity.csv", {"sample", "S"}, rows);
      }
      std::cout << "mean dual sensitivity over " << d.size() << " samples at sigma " << sigma
                << ": " << mean << "\n";
      return 0;
    }
    if (c->parsed()) {
      rs::MinimaDB db = rs::load_minima_db(model);
      rs::Dataset d = load_dataset(dataset, data, "train");
      std::vector<rs::Network> nets;
      for (const auto& mm : db.minima) nets.push_back(rs::minimum_network(db, mm));
      rs::Dataset sub = d;
      if (d.size() > samples) {
        std::vector<int> idx(samples);
        for (int i = 0; i < samples; ++i) idx[(size_t)i] = i * d.size() / samples;
        sub = rs::subset(d, idx);
      }
      rs::PerturbationSpec spec = rs::PerturbationSpec::from_sigma(d.d_hat(), sigma);
      rs::VerifyOptions vo;
      vo.tol = tol;
      vo.threads = threads;
      rs::GapReport rep = rs::compare_dual_exact(nets, sub.X, spec, vo);
      std::vector<std::vector<std::string>> rows;
      for (const auto& g : rep.rows)
        rows.push_back({std::to_string(g.net_index), rs::csv_num(g.s_dual), rs::csv_num(g.s_exact),
                        rs::csv_num(g.gap), g.excluded ? "1" : "0"});
      std::filesystem::create_directories(out);
      rs::write_csv(out + "/gaps.csv", {"net", "S_dual", "S_exact", "rel_gap", "excluded"}, rows);
      std::cout << "median relative gap " << rep.median_gap << ", max " << rep.max_gap << " over "
                << rep.rows.size() << " nets (" << rep.excluded << " excluded)\n";
      return 0;
    }
    if (e->parsed()) {
      rs::LoadedModel lm = rs::load_model(model);
      rs::Dataset d = load_dataset(dataset, data, "test");
      if (index < 0 || index >= d.size()) throw std::runtime_error("sample index out of range");
      rs::PerturbationSpec spec = rs::PerturbationSpec::from_sigma(d.d_hat(), sigma);
      std::string path = out.ends_with(".lp") ? out : out + "/model.lp";
      if (!out.ends_with(".lp")) std::filesystem::create_directories(out);
      rs::MilpExportInfo info = rs::export_milp(lm.net, d.X.col(index), spec, output, maximize, path);
      std::cout << "wrote " << info.path << ": " << info.binaries << " binaries, "
                << info.constraints << " constraints\n";
      return 0;
    }
    if (r->parsed()) return run_report(config);
    if (m->parsed()) {
      std::filesystem::create_directories(out);
      rs::generate_synthetic_mnist(out, n_train, n_test, seed);
      std::cout << "wrote " << out << "/{train,t10k}-{images-idx3,labels-idx1}-ubyte\n";
      return 0;
    }
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  std::cerr << app.help();
  return 2;
}
