#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <string>

#include <json.hpp>

#include "gazekit/models/uegazenet.hpp"
#include "gazekit/nn/weights_io.hpp"

namespace gazekit::models {

enum class GazeArch { UEGazeNet, UEGazeNetStar };

inline std::string to_string(GazeArch a) { return a == GazeArch::UEGazeNet ? "uegazenet" : "uegazenet-star"; }

inline GazeArch parse_arch(const std::string& s) {
  if (s == "uegazenet") return GazeArch::UEGazeNet;
  if (s == "uegazenet-star" || s == "uegazenet*") return GazeArch::UEGazeNetStar;
  fail(ErrorKind::Configuration, "unknown architecture '" + s + "' (uegazenet | uegazenet-star)");
}

/// Architecture description stored next to the weights as <weights>.json.
struct GazeModelSpec {
  GazeArch arch = GazeArch::UEGazeNet;
  BackboneSpec backbone;
  std::size_t head_hidden = 128;  // UEGazeNet heads
  std::size_t fc1 = 64;           // UEGazeNet* dense layers
  std::size_t fc2 = 32;
  std::size_t filter_window = 3;

  UEGazeNetSpec uegazenet() const { return {backbone, head_hidden}; }
  UEGazeNetStarSpec star() const { return {backbone, fc1, fc2, filter_window}; }

  nlohmann::ordered_json to_json() const {
    return {{"arch", to_string(arch)},
            {"kernels", backbone.kernels},
            {"residual_units", backbone.residual_units},
            {"input_width", backbone.input_width},
            {"input_height", backbone.input_height},
            {"head_hidden", head_hidden},
            {"fc1", fc1},
            {"fc2", fc2},
            {"filter_window", filter_window}};
  }

  static GazeModelSpec from_json(const nlohmann::json& j) {
    GazeModelSpec s;
    try {
      s.arch = parse_arch(j.at("arch").get<std::string>());
      s.backbone.kernels = j.at("kernels").get<std::array<std::size_t, 4>>();
      s.backbone.residual_units = j.at("residual_units").get<std::size_t>();
      s.backbone.input_width = j.at("input_width").get<std::size_t>();
      s.backbone.input_height = j.at("input_height").get<std::size_t>();
      s.head_hidden = j.at("head_hidden").get<std::size_t>();
      s.fc1 = j.at("fc1").get<std::size_t>();
      s.fc2 = j.at("fc2").get<std::size_t>();
      s.filter_window = j.at("filter_window").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Parse, std::string("bad model description: ") + e.what());
    }
    s.backbone.validate();
    return s;
  }
};

/// Either network behind one handle.
struct GazeModel {
  GazeModelSpec spec;
  std::unique_ptr<UEGazeNet> landmark_net;
  std::unique_ptr<UEGazeNetStar> direct_net;

  static GazeModel build(const GazeModelSpec& spec, std::uint64_t seed) {
    GazeModel m;
    m.spec = spec;
    if (spec.arch == GazeArch::UEGazeNet)
      m.landmark_net = std::make_unique<UEGazeNet>(spec.uegazenet(), seed);
    else
      m.direct_net = std::make_unique<UEGazeNetStar>(spec.star(), seed);
    return m;
  }

  std::vector<nn::LayerState> state() { return landmark_net ? landmark_net->state() : direct_net->state(); }
  std::size_t parameter_count() {
    return landmark_net ? landmark_net->parameter_count() : direct_net->parameter_count();
  }
};

inline std::filesystem::path spec_path(const std::filesystem::path& weights) {
  return std::filesystem::path(weights.string() + ".json");
}

inline void save_gaze_model(const std::filesystem::path& weights, GazeModel& m) {
  nn::save_weights(weights.string(), m.state());
  std::ofstream f(spec_path(weights));
  require(static_cast<bool>(f), ErrorKind::Io, "cannot write " + spec_path(weights).string());
  f << m.spec.to_json().dump(2) << '\n';
}

inline GazeModel load_gaze_model(const std::filesystem::path& weights) {
  std::ifstream f(spec_path(weights));
  require(static_cast<bool>(f), ErrorKind::Io, "missing model description " + spec_path(weights).string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, spec_path(weights).string() + ": " + e.what());
  }
  GazeModel m = GazeModel::build(GazeModelSpec::from_json(j), 0);
  auto st = m.state();
  nn::load_weights(weights.string(), st);
  return m;
}

}  // namespace gazekit::models
