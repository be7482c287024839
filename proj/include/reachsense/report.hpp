#pragma once

// Output plumbing: metric/study CSVs (%.17g doubles so re-runs are
// byte-identical), simple SVG line/scatter plots, and run manifests.

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reachsense/metrics.hpp"

namespace reachsense {

std::string csv_num(double v);  // %.17g

void write_csv(const std::string& path, const std::vector<std::string>& columns,
               const std::vector<std::vector<std::string>>& rows);

void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows);

struct SvgSeries {
  std::string label;
  std::vector<double> x, y;
  bool scatter = false;
};

struct SvgOptions {
  std::string title, xlabel, ylabel;
  bool log_y = false;
  int width = 720, height = 480;
};

void write_svg_plot(const std::string& path, const std::vector<SvgSeries>& series,
                    const SvgOptions& opts);

uint64_t fnv1a(const std::string& s);

// Manifest: the config object plus its FNV-1a hash; stable key order.
void write_manifest(const std::string& path, const nlohmann::json& config);
nlohmann::json read_manifest(const std::string& path);

}  // namespace reachsense
