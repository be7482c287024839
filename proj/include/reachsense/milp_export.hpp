#pragma once

// Big-M MILP encoding of the exact reachability problem, written in the
// common LP text format. One binary per unstable ReLU; stable ReLUs are
// pure linear constraints. Big-M constants come from the pre-activation
// bounds (u and -l per neuron).

#include <string>

#include "reachsense/bounds.hpp"

namespace reachsense {

struct MilpExportInfo {
  int binaries = 0;
  int constraints = 0;
  std::string path;
};

MilpExportInfo export_milp(const Network& net, const Vec& x, const PerturbationSpec& spec,
                           int objective_output, bool maximize, const std::string& path);

}  // namespace reachsense
