#pragma once

#include <cmath>
#include <iomanip>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gazekit/harness/io.hpp"
#include "gazekit/phantom/image.hpp"

namespace gazekit::harness {

/// Row-major grid of reals with a declared shape.
struct Grid {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double at(std::size_t r, std::size_t c) const { return values.at(r * cols + c); }
};

/// Fixed-precision text for CSV cells: byte-stable across runs.
inline std::string fmt(double v, int digits = 6) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

class Table {
 public:
  explicit Table(std::vector<std::string> header) : header_(std::move(header)) {}

  void add(std::vector<std::string> row) {
    require(row.size() == header_.size(), ErrorKind::Dimension, "CSV row width does not match header");
    rows_.push_back(std::move(row));
  }

  std::size_t size() const { return rows_.size(); }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }

  std::string csv() const {
    std::ostringstream os;
    auto line = [&](const std::vector<std::string>& r) {
      for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
      os << '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return os.str();
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Result of one CLI command. Metrics keep insertion order so the JSON file is
/// byte-stable.
struct ExperimentReport {
  std::string experiment;
  ojson config = ojson::object();
  std::vector<std::pair<std::string, double>> metrics;
  std::vector<Grid> grids;
  std::vector<std::string> artifacts;
  ojson extra = ojson::object();

  void metric(const std::string& name, double value) { metrics.emplace_back(name, value); }

  double metric(const std::string& name) const {
    for (const auto& [k, v] : metrics)
      if (k == name) return v;
    fail(ErrorKind::Parameter, "report has no metric '" + name + "'");
  }

  bool has_metric(const std::string& name) const {
    for (const auto& m : metrics)
      if (m.first == name) return true;
    return false;
  }

  void validate() const {
    for (const auto& [k, v] : metrics)
      require(std::isfinite(v), ErrorKind::Training, "metric '" + k + "' is not finite");
    for (const auto& g : grids)
      require(g.values.size() == g.rows * g.cols, ErrorKind::Dimension, "grid '" + g.name + "' has wrong size");
  }

  ojson to_json() const {
    ojson m = ojson::object();
    for (const auto& [k, v] : metrics) m[k] = v;
    ojson grids_json = ojson::array();
    for (const auto& g : grids) grids_json.push_back({{"name", g.name}, {"rows", g.rows}, {"cols", g.cols}, {"values", g.values}});
    ojson j = {{"experiment", experiment}, {"config", config}, {"metrics", m}, {"grids", grids_json}, {"artifacts", artifacts}};
    if (!extra.empty()) j["details"] = extra;
    return j;
  }
};

/// Writes report.json into `dir` after validation; returns its path.
inline fs::path write_report(const fs::path& dir, ExperimentReport& report) {
  report.validate();
  report.artifacts.push_back("report.json");
  const fs::path p = dir / "report.json";
  write_text(p, report.to_json().dump(2) + "\n");
  return p;
}

inline void write_table(const fs::path& dir, const std::string& name, const Table& t, ExperimentReport& report) {
  write_text(dir / name, t.csv());
  report.artifacts.push_back(name);
}

/// Grid as a PGM heat image scaled to its maximum, each cell drawn as a
/// `scale` x `scale` block.
inline void write_heat_pgm(const fs::path& dir, const std::string& name, const Grid& g, ExperimentReport& report,
                           std::size_t scale = 8) {
  double mx = 0.0;
  for (double v : g.values) mx = std::max(mx, v);
  phantom::Image img(g.cols * scale, g.rows * scale);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) img(x, y) = mx > 0.0 ? g.at(y / scale, x / scale) / mx : 0.0;
  if (!fs::exists(dir)) fs::create_directories(dir);
  phantom::write_pgm((dir / name).string(), img);
  report.artifacts.push_back(name);
}

}  // namespace gazekit::harness
