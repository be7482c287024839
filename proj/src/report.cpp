#include "reachsense/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace reachsense {

std::string csv_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_csv(const std::string& path, const std::vector<std::string>& columns,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream f(path, std::ios::binary);  // binary: no platform newline surprises
  if (!f) throw std::runtime_error("cannot write " + path);
  for (size_t i = 0; i < columns.size(); ++i) f << (i ? "," : "") << columns[i];
  f << "\n";
  for (const auto& row : rows) {
    if (row.size() != columns.size())
      throw std::invalid_argument("write_csv: row width mismatch in " + path);
    for (size_t i = 0; i < row.size(); ++i) f << (i ? "," : "") << row[i];
    f << "\n";
  }
  if (!f) throw std::runtime_error("write failure on " + path);
}

void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows) {
  std::vector<std::vector<std::string>> out;
  for (const auto& r : rows)
    out.push_back({std::to_string(r.epoch), r.split, r.method, csv_num(r.ce), csv_num(r.err),
                   csv_num(r.sense), csv_num(r.jacob), csv_num(r.spectral), csv_num(r.adv_loss),
                   csv_num(r.adv_err)});
  write_csv(path,
            {"epoch", "split", "method", "CE", "ERR", "SENSE", "JACOB", "SPECTRAL", "ADV_LOSS",
             "ADV_ERR"},
            out);
}

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

}  // namespace

void write_svg_plot(const std::string& path, const std::vector<SvgSeries>& series,
                    const SvgOptions& opts) {
  if (series.empty()) throw std::invalid_argument("write_svg_plot: no series");
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw std::invalid_argument("write_svg_plot: x/y size mismatch");
    for (size_t i = 0; i < s.x.size(); ++i) {
      double y = s.y[i];
      if (opts.log_y) {
        if (y <= 0)
          throw std::invalid_argument("write_svg_plot: log axis needs positive values");
        y = std::log10(y);
      }
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  if (xmin > xmax) {
    xmin = 0;
    xmax = 1;
    ymin = 0;
    ymax = 1;
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  const double ml = 70, mr = 20, mt = 40, mb = 50;
  const double pw = opts.width - ml - mr, ph = opts.height - mt - mb;
  auto px = [&](double x) { return ml + pw * (x - xmin) / (xmax - xmin); };
  auto py = [&](double yraw) {
    double y = opts.log_y ? std::log10(yraw) : yraw;
    return mt + ph * (1.0 - (y - ymin) / (ymax - ymin));
  };

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opts.width << "\" height=\""
    << opts.height << "\" viewBox=\"0 0 " << opts.width << " " << opts.height << "\">\n";
  f << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  f << "<text x=\"" << opts.width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
    << opts.title << "</text>\n";
  f << "<text x=\"" << opts.width / 2 << "\" y=\"" << opts.height - 12
    << "\" text-anchor=\"middle\" font-size=\"12\">" << opts.xlabel << "</text>\n";
  f << "<text x=\"16\" y=\"" << opts.height / 2 << "\" text-anchor=\"middle\" font-size=\"12\" "
    << "transform=\"rotate(-90 16 " << opts.height / 2 << ")\">" << opts.ylabel
    << (opts.log_y ? " (log10)" : "") << "</text>\n";
  f << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  // axis ticks
  for (int i = 0; i <= 4; ++i) {
    double xv = xmin + (xmax - xmin) * i / 4.0;
    double yv = ymin + (ymax - ymin) * i / 4.0;
    f << "<text x=\"" << px(xv) << "\" y=\"" << mt + ph + 16
      << "\" text-anchor=\"middle\" font-size=\"10\">" << csv_num(std::round(xv * 1e6) / 1e6)
      << "</text>\n";
    f << "<text x=\"" << ml - 6 << "\" y=\"" << mt + ph * (1.0 - i / 4.0) + 3
      << "\" text-anchor=\"end\" font-size=\"10\">" << csv_num(std::round(yv * 1e6) / 1e6)
      << "</text>\n";
  }
  int ci = 0;
  for (const auto& s : series) {
    const char* color = kPalette[ci % 6];
    if (s.scatter) {
      for (size_t i = 0; i < s.x.size(); ++i) {
        f << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i])
          << "\" r=\"2.5\" fill=\"" << color << "\" fill-opacity=\"0.7\"/>\n";
      }
    } else {
      f << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
      for (size_t i = 0; i < s.x.size(); ++i) f << px(s.x[i]) << "," << py(s.y[i]) << " ";
      f << "\"/>\n";
    }
    if (!s.label.empty())
      f << "<text x=\"" << ml + 8 << "\" y=\"" << mt + 16 + 14 * ci << "\" font-size=\"11\" fill=\""
        << color << "\">" << s.label << "</text>\n";
    ++ci;
  }
  f << "</svg>\n";
  if (!f) throw std::runtime_error("write failure on " + path);
}

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void write_manifest(const std::string& path, const nlohmann::json& config) {
  nlohmann::json m;
  m["config"] = config;
  m["config_hash"] = fnv1a(config.dump());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << m.dump(2) << "\n";
  if (!f) throw std::runtime_error("write failure on " + path);
}

nlohmann::json read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open manifest " + path);
  nlohmann::json m = nlohmann::json::parse(f);
  if (!m.contains("config") || !m.contains("config_hash"))
    throw std::runtime_error("manifest missing config/config_hash: " + path);
  if (m["config_hash"].get<uint64_t>() != fnv1a(m["config"].dump()))
    throw std::runtime_error("manifest hash mismatch: " + path);
  return m["config"];
}

}  // namespace reachsense
