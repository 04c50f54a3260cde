#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gazekit/error.hpp"
#include "gazekit/geometry/gaze.hpp"

namespace gazekit::gesture {

using geometry::Vec2;

constexpr int kPatternCount = 17;
constexpr int kCategoryCount = 5;
constexpr int kCatalogVersion = 1;

/// A reference shape in normalized [0,1]^2 screen coordinates (y down).
struct PatternTemplate {
  int id = 0;
  int category = 0;
  std::string name;
  std::vector<Vec2> waypoints;
  bool closed = false;

  void validate() const {
    require(id >= 1 && id <= kPatternCount, ErrorKind::Parameter, "pattern id must be in 1..17");
    require(category >= 1 && category <= kCategoryCount, ErrorKind::Parameter, "category must be in 1..5");
    require(waypoints.size() >= 2, ErrorKind::Parameter, "pattern " + std::to_string(id) + " needs >= 2 waypoints");
    for (const auto& p : waypoints)
      require(p.x() >= 0.0 && p.x() <= 1.0 && p.y() >= 0.0 && p.y() <= 1.0, ErrorKind::Parameter,
              "pattern " + std::to_string(id) + " waypoint outside [0,1]^2");
  }
};

using Catalog = std::vector<PatternTemplate>;

namespace detail {

// Arc of the circle (cx, cy, r) from angle a0 to a1 (radians, counter-clockwise
// on screen means decreasing y), sampled with n + 1 points.
inline std::vector<Vec2> arc(double cx, double cy, double r, double a0, double a1, int n) {
  std::vector<Vec2> pts;
  for (int i = 0; i <= n; ++i) {
    const double a = a0 + (a1 - a0) * static_cast<double>(i) / static_cast<double>(n);
    pts.emplace_back(cx + r * std::cos(a), cy - r * std::sin(a));
  }
  return pts;
}

}  // namespace detail

/// The shipped 17-pattern catalog.
///   1  strokes: horizontal, vertical, rising diagonal, falling diagonal
///   2  L-shapes with the corner at each of the four box corners
///   3  zigzags N, Z, W, M
///   4  semicircular arcs opening down, up, right, left
///   5  circle
inline const Catalog& default_catalog() {
  static const Catalog catalog = [] {
    using geometry::kPi;
    Catalog c;
    auto add = [&](int category, std::string name, std::vector<Vec2> w, bool closed = false) {
      c.push_back({static_cast<int>(c.size()) + 1, category, std::move(name), std::move(w), closed});
    };
    add(1, "horizontal", {{0.1, 0.5}, {0.9, 0.5}});
    add(1, "vertical", {{0.5, 0.1}, {0.5, 0.9}});
    add(1, "rising-diagonal", {{0.1, 0.9}, {0.9, 0.1}});
    add(1, "falling-diagonal", {{0.1, 0.1}, {0.9, 0.9}});
    add(2, "l-bottom-left", {{0.2, 0.1}, {0.2, 0.9}, {0.8, 0.9}});
    add(2, "l-bottom-right", {{0.8, 0.1}, {0.8, 0.9}, {0.2, 0.9}});
    add(2, "l-top-left", {{0.2, 0.9}, {0.2, 0.1}, {0.8, 0.1}});
    add(2, "l-top-right", {{0.8, 0.9}, {0.8, 0.1}, {0.2, 0.1}});
    add(3, "zigzag-n", {{0.2, 0.9}, {0.2, 0.1}, {0.8, 0.9}, {0.8, 0.1}});
    add(3, "zigzag-z", {{0.1, 0.2}, {0.9, 0.2}, {0.1, 0.8}, {0.9, 0.8}});
    add(3, "zigzag-w", {{0.1, 0.2}, {0.3, 0.8}, {0.5, 0.4}, {0.7, 0.8}, {0.9, 0.2}});
    add(3, "zigzag-m", {{0.1, 0.8}, {0.3, 0.2}, {0.5, 0.6}, {0.7, 0.2}, {0.9, 0.8}});
    add(4, "arc-open-down", detail::arc(0.5, 0.7, 0.4, kPi, 0.0, 16));
    add(4, "arc-open-up", detail::arc(0.5, 0.3, 0.4, kPi, 2 * kPi, 16));
    add(4, "arc-open-right", detail::arc(0.7, 0.5, 0.4, 0.5 * kPi, 1.5 * kPi, 16));
    add(4, "arc-open-left", detail::arc(0.3, 0.5, 0.4, 0.5 * kPi, -0.5 * kPi, 16));
    add(5, "circle", detail::arc(0.5, 0.5, 0.4, 0.0, 2 * kPi, 32), true);
    return c;
  }();
  return catalog;
}

inline const PatternTemplate& find_pattern(const Catalog& c, int id) {
  for (const auto& t : c)
    if (t.id == id) return t;
  fail(ErrorKind::Parameter, "unknown pattern id " + std::to_string(id));
}

inline void validate_catalog(const Catalog& c) {
  require(c.size() == kPatternCount, ErrorKind::Parameter,
          "catalog must hold 17 patterns, has " + std::to_string(c.size()));
  std::vector<bool> ids(kPatternCount + 1, false), cats(kCategoryCount + 1, false);
  for (const auto& t : c) {
    t.validate();
    require(!ids[static_cast<std::size_t>(t.id)], ErrorKind::Parameter, "duplicate pattern id " + std::to_string(t.id));
    ids[static_cast<std::size_t>(t.id)] = true;
    cats[static_cast<std::size_t>(t.category)] = true;
  }
  for (int k = 1; k <= kCategoryCount; ++k)
    require(cats[static_cast<std::size_t>(k)], ErrorKind::Parameter, "category " + std::to_string(k) + " is empty");
}

inline nlohmann::json pattern_to_json(const PatternTemplate& t) {
  nlohmann::json w = nlohmann::json::array();
  for (const auto& p : t.waypoints) w.push_back({p.x(), p.y()});
  return {{"id", t.id}, {"category", t.category}, {"name", t.name}, {"closed", t.closed}, {"waypoints", w}};
}

inline nlohmann::json catalog_to_json(const Catalog& c) {
  nlohmann::json patterns = nlohmann::json::array();
  for (const auto& t : c) patterns.push_back(pattern_to_json(t));
  return {{"version", kCatalogVersion}, {"patterns", patterns}};
}

inline Catalog catalog_from_json(const nlohmann::json& j) {
  Catalog c;
  try {
    require(j.at("version").get<int>() == kCatalogVersion, ErrorKind::Parse,
            "unsupported catalog version " + j.at("version").dump());
    for (const auto& p : j.at("patterns")) {
      PatternTemplate t;
      t.id = p.at("id").get<int>();
      t.category = p.at("category").get<int>();
      t.name = p.value("name", std::string{});
      t.closed = p.at("closed").get<bool>();
      for (const auto& w : p.at("waypoints")) {
        require(w.is_array() && w.size() == 2, ErrorKind::Parse, "waypoint must be [x, y]");
        t.waypoints.emplace_back(w[0].get<double>(), w[1].get<double>());
      }
      c.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, std::string("bad catalog: ") + e.what());
  }
  validate_catalog(c);
  return c;
}

inline Catalog load_catalog(const std::string& path) {
  std::ifstream f(path);
  require(static_cast<bool>(f), ErrorKind::Io, "cannot open catalog " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, "catalog " + path + ": " + e.what());
  }
  return catalog_from_json(j);
}

}  // namespace gazekit::gesture
