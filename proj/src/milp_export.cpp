#include "reachsense/milp_export.hpp"

#include <cstdio>
#include <fstream>

namespace reachsense {

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// "+ 3.5 x0" / "- 2 z1_4" terms; skips zero coefficients
void append_term(std::string& s, double coef, const std::string& var) {
  if (coef == 0.0) return;
  s += coef < 0 ? " - " : " + ";
  s += num(std::abs(coef)) + " " + var;
}

}  // namespace

MilpExportInfo export_milp(const Network& net, const Vec& x, const PerturbationSpec& spec,
                           int objective_output, bool maximize, const std::string& path) {
  spec.validate(net.input_dim());
  if (objective_output < 0 || objective_output >= net.output_dim())
    throw std::invalid_argument("export_milp: bad objective output");
  StackT<Mat> st = make_stack(net);
  PreactBounds pb = preactivation_bounds(net, x, spec);
  const int K = st.layers();

  auto zvar = [](int layer, long j) { return "z" + std::to_string(layer) + "_" + std::to_string(j); };
  auto avar = [](int layer, long j) { return "a" + std::to_string(layer) + "_" + std::to_string(j); };
  auto invar = [](long j) { return "x" + std::to_string(j); };

  MilpExportInfo info;
  info.path = path;
  std::string constraints, bounds, binaries;
  int cn = 0;
  auto add_constraint = [&](const std::string& body) {
    constraints += " c" + std::to_string(++cn) + ": " + body + "\n";
  };

  // input box
  for (long j = 0; j < x.size(); ++j) {
    bounds += " " + num(x(j) - spec.eps_v(j)) + " <= " + invar(j) +
              " <= " + num(x(j) + spec.eps_v(j)) + "\n";
  }

  auto prev_var = [&](int layer, long j) { return layer == 0 ? invar(j) : zvar(layer - 1, j); };

  for (int k = 0; k < K - 1; ++k) {
    const Mat& W = st.W[(size_t)k];
    const Vec b = Vec(st.b[(size_t)k]);
    const Vec& l = pb.lower[(size_t)k];
    const Vec& u = pb.upper[(size_t)k];
    for (long j = 0; j < W.rows(); ++j) {
      if (u(j) <= 0.0) {
        bounds += " " + zvar(k, j) + " = 0\n";
        continue;
      }
      std::string neg_aff;
      for (long i = 0; i < W.cols(); ++i) append_term(neg_aff, -W(j, i), prev_var(k, i));
      if (l(j) >= 0.0) {
        // stable active: z = W p + b
        add_constraint(zvar(k, j) + neg_aff + " = " + num(b(j)));
        bounds += " " + zvar(k, j) + " >= 0\n";
        continue;
      }
      // unstable: binary a with big-M constants u and -l
      ++info.binaries;
      binaries += " " + avar(k, j) + "\n";
      // z >= zhat
      add_constraint(zvar(k, j) + neg_aff + " >= " + num(b(j)));
      // z <= zhat - l (1 - a)
      add_constraint(zvar(k, j) + neg_aff + " - " + num(l(j)) + " " + avar(k, j) + " <= " +
                     num(b(j) - l(j)));
      // z <= u a
      add_constraint(zvar(k, j) + " - " + num(u(j)) + " " + avar(k, j) + " <= 0");
      bounds += " 0 <= " + zvar(k, j) + " <= " + num(u(j)) + "\n";
    }
  }

  // output objective: y = row of final affine over z_{K-2} (or inputs)
  const Mat& Wo = st.W[(size_t)(K - 1)];
  const Vec bo = Vec(st.b[(size_t)(K - 1)]);
  std::string obj;
  for (long i = 0; i < Wo.cols(); ++i) append_term(obj, Wo(objective_output, i), prev_var(K - 1, i));
  if (obj.empty()) obj = " 0 " + (x.size() > 0 ? invar(0) : std::string("x0"));

  std::ofstream f(path);
  if (!f) throw std::runtime_error("export_milp: cannot open " + path);
  f << "\\ big-M encoding of output " << objective_output << (maximize ? " (max)" : " (min)")
    << "; objective constant offset " << num(bo(objective_output)) << "\n";
  f << (maximize ? "Maximize\n" : "Minimize\n");
  f << " obj:" << obj << "\n";
  f << "Subject To\n" << constraints;
  f << "Bounds\n" << bounds;
  if (!binaries.empty()) f << "Binary\n" << binaries;
  f << "End\n";
  if (!f) throw std::runtime_error("export_milp: write failure on " + path);
  info.constraints = cn;
  return info;
}

}  // namespace reachsense
