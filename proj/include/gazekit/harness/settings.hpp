#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gazekit/error.hpp"

namespace gazekit::harness {

/// One tunable of a command. The desk default applies under --desk when set.
struct KeySpec {
  std::string key;
  std::string default_value;
  std::string help;
  std::optional<std::string> desk_value = std::nullopt;
};

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

/// Flat `key = value` file; '#' starts a comment, blank lines are ignored and
/// surrounding double quotes on a value are stripped.
inline std::map<std::string, std::string> parse_config_text(const std::string& text, const std::string& origin) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError(origin + ": expected key = value", n);
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError(origin + ": empty key", n);
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    out[key] = value;
  }
  return out;
}

inline std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream f(path);
  require(static_cast<bool>(f), ErrorKind::Configuration, "cannot open config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    return parse_config_text(ss.str(), path);
  } catch (const ParseError& e) {
    fail(ErrorKind::Configuration, e.what());
  }
}

/// Resolved settings for one command run: defaults, then the desk profile,
/// then the config file, then command-line values.
class Settings {
 public:
  Settings() = default;
  Settings(const std::vector<KeySpec>& specs, bool desk) : desk_(desk) {
    for (const auto& s : specs) {
      values_[s.key] = (desk && s.desk_value) ? *s.desk_value : s.default_value;
      known_.push_back(s.key);
    }
  }

  bool desk() const { return desk_; }

  void set(const std::string& key, const std::string& value) {
    require(std::find(known_.begin(), known_.end(), key) != known_.end(), ErrorKind::Configuration,
            "unknown setting '" + key + "'");
    values_[key] = value;
  }

  /// Applies file entries; global keys (seed, out, desk) are accepted too.
  void apply(const std::map<std::string, std::string>& entries) {
    for (const auto& [k, v] : entries) set(k, v);
  }

  bool has(const std::string& key) const { return values_.count(key) && !values_.at(key).empty(); }

  const std::string& str(const std::string& key) const {
    const auto it = values_.find(key);
    require(it != values_.end(), ErrorKind::Configuration, "setting '" + key + "' is not defined");
    return it->second;
  }

  double real(const std::string& key) const {
    const std::string& v = str(key);
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used == v.size() && std::isfinite(d)) return d;
    } catch (const std::logic_error&) {
    }
    fail(ErrorKind::Configuration, "setting '" + key + "' must be a number, got '" + v + "'");
  }

  long long integer(const std::string& key) const {
    const std::string& v = str(key);
    try {
      std::size_t used = 0;
      const long long i = std::stoll(v, &used);
      if (used == v.size()) return i;
    } catch (const std::logic_error&) {
    }
    fail(ErrorKind::Configuration, "setting '" + key + "' must be an integer, got '" + v + "'");
  }

  std::uint64_t seed(const std::string& key = "seed") const {
    const long long v = integer(key);
    require(v >= 0, ErrorKind::Configuration, "seed must be >= 0");
    return static_cast<std::uint64_t>(v);
  }

  bool flag(const std::string& key) const {
    const std::string& v = str(key);
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off" || v.empty()) return false;
    fail(ErrorKind::Configuration, "setting '" + key + "' must be a boolean, got '" + v + "'");
  }

  /// "64x48" -> (64, 48).
  std::pair<std::size_t, std::size_t> size(const std::string& key) const { return parse_size(str(key), key); }

  std::vector<std::pair<std::size_t, std::size_t>> sizes(const std::string& key) const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (const auto& item : list(key)) out.push_back(parse_size(item, key));
    return out;
  }

  std::vector<std::string> list(const std::string& key) const {
    std::vector<std::string> out;
    std::istringstream is(str(key));
    std::string item;
    while (std::getline(is, item, ',')) {
      item = trim(item);
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }

  std::vector<long long> integers(const std::string& key) const {
    std::vector<long long> out;
    for (const auto& item : list(key)) {
      try {
        std::size_t used = 0;
        out.push_back(std::stoll(item, &used));
        if (used == item.size()) continue;
      } catch (const std::logic_error&) {
      }
      fail(ErrorKind::Configuration, "setting '" + key + "' must be a list of integers");
    }
    return out;
  }

  /// Sorted snapshot of every effective value except the output directory, so
  /// reruns into different directories produce identical reports.
  nlohmann::ordered_json snapshot() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [k, v] : values_)
      if (k != "out") j[k] = v;
    return j;
  }

 private:
  static std::pair<std::size_t, std::size_t> parse_size(const std::string& s, const std::string& key) {
    const auto x = s.find('x');
    try {
      if (x != std::string::npos) {
        std::size_t u1 = 0, u2 = 0;
        const long long w = std::stoll(s.substr(0, x), &u1);
        const long long h = std::stoll(s.substr(x + 1), &u2);
        if (u1 == x && u2 == s.size() - x - 1 && w > 0 && h > 0)
          return {static_cast<std::size_t>(w), static_cast<std::size_t>(h)};
      }
    } catch (const std::logic_error&) {
    }
    fail(ErrorKind::Configuration, "setting '" + key + "' needs WIDTHxHEIGHT, got '" + s + "'");
  }

  bool desk_ = false;
  std::map<std::string, std::string> values_;
  std::vector<std::string> known_;
};

}  // namespace gazekit::harness
