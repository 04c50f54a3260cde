#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gazekit/gesture/corpus.hpp"
#include "gazekit/harness/settings.hpp"
#include "gazekit/phantom/render.hpp"

namespace gazekit::harness {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

inline std::ofstream open_out(const fs::path& p, bool binary = false) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, binary ? std::ios::binary : std::ios::out);
  require(static_cast<bool>(f), ErrorKind::Io, "cannot write " + p.string());
  return f;
}

inline std::ifstream open_in(const fs::path& p, bool binary = false) {
  std::ifstream f(p, binary ? std::ios::binary : std::ios::in);
  require(static_cast<bool>(f), ErrorKind::Io, "cannot open " + p.string());
  return f;
}

inline void write_text(const fs::path& p, const std::string& text) { open_out(p) << text; }

inline std::string read_text(const fs::path& p) {
  auto f = open_in(p, true);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline json parse_json_line(const std::string& line, std::size_t n) {
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(), n);
  }
}

// ---------------------------------------------------------------- phantom rig

inline ojson phantom_to_json(const phantom::PhantomConfig& c) {
  auto range = [](const phantom::Range& r) { return ojson::array({r.lo, r.hi}); };
  return {{"eyeball_radius_mm", c.eyeball_radius_mm},
          {"iris_radius_mm", c.iris_radius_mm},
          {"focal_px", c.focal_px},
          {"principal_point", {c.principal_point.x(), c.principal_point.y()}},
          {"eye_center_mm", {c.eye_center_mm.x(), c.eye_center_mm.y(), c.eye_center_mm.z()}},
          {"camera_elevation_deg", c.camera_elevation_deg},
          {"width", c.width},
          {"height", c.height},
          {"lid_half_width_mm", c.lid_half_width_mm},
          {"lid_opening", c.lid_opening},
          {"lid_follow", c.lid_follow},
          {"lid_openness", c.lid_openness},
          {"iris_darkness", range(c.iris_darkness)},
          {"sclera_brightness", range(c.sclera_brightness)},
          {"skin_tone", range(c.skin_tone)},
          {"noise_sigma", range(c.noise_sigma)}};
}

inline phantom::PhantomConfig phantom_from_json(const json& j) {
  phantom::PhantomConfig c;
  auto range = [](const json& a) { return phantom::Range{a.at(0).get<double>(), a.at(1).get<double>()}; };
  c.eyeball_radius_mm = j.at("eyeball_radius_mm").get<double>();
  c.iris_radius_mm = j.at("iris_radius_mm").get<double>();
  c.focal_px = j.at("focal_px").get<double>();
  c.principal_point = {j.at("principal_point").at(0).get<double>(), j.at("principal_point").at(1).get<double>()};
  const auto& e = j.at("eye_center_mm");
  c.eye_center_mm = {e.at(0).get<double>(), e.at(1).get<double>(), e.at(2).get<double>()};
  c.camera_elevation_deg = j.at("camera_elevation_deg").get<double>();
  c.width = j.at("width").get<std::size_t>();
  c.height = j.at("height").get<std::size_t>();
  c.lid_half_width_mm = j.at("lid_half_width_mm").get<double>();
  c.lid_opening = j.at("lid_opening").get<double>();
  c.lid_follow = j.at("lid_follow").get<double>();
  c.lid_openness = j.at("lid_openness").get<double>();
  c.iris_darkness = range(j.at("iris_darkness"));
  c.sclera_brightness = range(j.at("sclera_brightness"));
  c.skin_tone = range(j.at("skin_tone"));
  c.noise_sigma = range(j.at("noise_sigma"));
  c.validate();
  return c;
}

// -------------------------------------------------------------- gaze datasets
//
// <name>.jsonl: a header line, then one label record per sample.
// <name>.bin:   the 8-bit images, width * height bytes each, in record order.

constexpr const char* kGazeFormat = "gazekit-gaze";
constexpr int kGazeFormatVersion = 1;

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline ojson sample_record(std::size_t index, const phantom::EyeSample& s) {
  const auto a = s.gaze.yaw_pitch();
  ojson lm = ojson::array();
  for (const auto& p : s.landmarks.points) lm.push_back({p.x(), p.y()});
  return {{"index", index},
          {"yaw", a.yaw},
          {"pitch", a.pitch},
          {"gaze", {s.gaze.x(), s.gaze.y(), s.gaze.z()}},
          {"pupil", {s.pupil.x(), s.pupil.y()}},
          {"landmarks", lm}};
}

class GazeDatasetWriter {
 public:
  GazeDatasetWriter(const fs::path& jsonl, const phantom::PhantomConfig& cfg, std::size_t count)
      : labels_(open_out(jsonl)), blob_(open_out(fs::path(jsonl).replace_extension(".bin"), true)), cfg_(cfg) {
    ojson header = {{"format", kGazeFormat},
                    {"version", kGazeFormatVersion},
                    {"count", count},
                    {"width", cfg.width},
                    {"height", cfg.height},
                    {"blob", fs::path(jsonl).replace_extension(".bin").filename().string()},
                    {"camera", phantom_to_json(cfg)}};
    labels_ << header.dump() << '\n';
  }

  void add(const phantom::EyeSample& s) {
    require(s.image.width == cfg_.width && s.image.height == cfg_.height, ErrorKind::Dimension,
            "sample size does not match the dataset header");
    labels_ << sample_record(written_, s).dump() << '\n';
    std::vector<char> bytes(s.image.pixels.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = static_cast<char>(to_byte(s.image.pixels[i]));
    blob_.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    ++written_;
  }

  std::size_t written() const { return written_; }

 private:
  std::ofstream labels_;
  std::ofstream blob_;
  phantom::PhantomConfig cfg_;
  std::size_t written_ = 0;
};

struct GazeDatasetFile {
  phantom::PhantomConfig camera;
  std::vector<phantom::EyeSample> samples;
};

inline GazeDatasetFile read_gaze_dataset(const fs::path& jsonl) {
  auto f = open_in(jsonl);
  std::string line;
  std::size_t n = 0;
  require(static_cast<bool>(std::getline(f, line)), ErrorKind::Parse, "empty gaze dataset " + jsonl.string());
  ++n;
  GazeDatasetFile out;
  std::size_t count = 0;
  fs::path blob_path;
  try {
    const json h = parse_json_line(line, n);
    if (h.at("format").get<std::string>() != kGazeFormat || h.at("version").get<int>() != kGazeFormatVersion)
      throw ParseError("not a gazekit gaze dataset header", n);
    count = h.at("count").get<std::size_t>();
    out.camera = phantom_from_json(h.at("camera"));
    blob_path = jsonl.parent_path() / h.at("blob").get<std::string>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad header: ") + e.what(), n);
  }
  auto blob = open_in(blob_path, true);
  const std::size_t px = out.camera.width * out.camera.height;
  std::vector<char> bytes(px);
  while (std::getline(f, line)) {
    ++n;
    if (line.empty()) continue;
    const json r = parse_json_line(line, n);
    phantom::EyeSample s;
    try {
      const auto& g = r.at("gaze");
      s.gaze = geometry::GazeDirection::from_vector({g.at(0).get<double>(), g.at(1).get<double>(), g.at(2).get<double>()});
      s.pupil = {r.at("pupil").at(0).get<double>(), r.at("pupil").at(1).get<double>()};
      const auto& lm = r.at("landmarks");
      if (lm.size() != geometry::kLandmarkCount) throw ParseError("expected 55 landmarks", n);
      for (std::size_t i = 0; i < geometry::kLandmarkCount; ++i)
        s.landmarks.points[i] = {lm[i].at(0).get<double>(), lm[i].at(1).get<double>()};
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad record: ") + e.what(), n);
    }
    blob.read(bytes.data(), static_cast<std::streamsize>(px));
    if (blob.gcount() != static_cast<std::streamsize>(px)) throw ParseError("image blob is truncated", n);
    s.image = phantom::Image(out.camera.width, out.camera.height);
    for (std::size_t i = 0; i < px; ++i) s.image.pixels[i] = static_cast<std::uint8_t>(bytes[i]) / 255.0;
    out.samples.push_back(std::move(s));
  }
  require(out.samples.size() == count, ErrorKind::Parse,
          "header announces " + std::to_string(count) + " samples, found " + std::to_string(out.samples.size()));
  return out;
}

// ----------------------------------------------------------- gesture datasets

inline ojson gesture_record_json(const gesture::GestureRecord& r) {
  ojson samples = ojson::array();
  for (const auto& s : r.trajectory.samples) samples.push_back({s.t_ms, s.gaze.x(), s.gaze.y(), s.gaze.z()});
  return {{"id", r.pattern_id}, {"category", r.category}, {"subject", r.subject}, {"samples", samples}};
}

inline void write_gesture_dataset(const fs::path& p, const std::vector<gesture::GestureRecord>& records) {
  auto f = open_out(p);
  for (const auto& r : records) f << gesture_record_json(r).dump() << '\n';
}

inline gesture::GestureRecord gesture_record_from_json(const json& j, std::size_t n) {
  gesture::GestureRecord r;
  try {
    r.pattern_id = j.at("id").get<int>();
    r.category = j.at("category").get<int>();
    r.subject = j.at("subject").get<int>();
    for (const auto& s : j.at("samples")) {
      if (!s.is_array() || s.size() != 4) throw ParseError("sample must be [t_ms, gx, gy, gz]", n);
      const geometry::Vec3 g(s[1].get<double>(), s[2].get<double>(), s[3].get<double>());
      if (!(g.norm() > 0.0)) throw ParseError("zero gaze vector", n);
      r.trajectory.samples.push_back({s[0].get<double>(), geometry::GazeDirection::from_vector(g)});
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad gesture record: ") + e.what(), n);
  }
  if (r.pattern_id < 1 || r.pattern_id > gesture::kPatternCount) throw ParseError("pattern id outside 1..17", n);
  r.trajectory.label = r.pattern_id;
  return r;
}

inline std::vector<gesture::GestureRecord> read_gesture_dataset(const fs::path& p) {
  auto f = open_in(p);
  std::vector<gesture::GestureRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(f, line)) {
    ++n;
    if (trim(line).empty()) continue;
    out.push_back(gesture_record_from_json(parse_json_line(line, n), n));
  }
  return out;
}

// --------------------------------------------------------------- timing logs

/// One completed trial of the collection protocol.
struct TimingEvent {
  std::string user;
  std::string session;
  int batch = 1;
  double t_ms = 0.0;
  int pattern_id = 0;
  double duration_ms = 0.0;
  bool correct = false;

  friend bool operator==(const TimingEvent&, const TimingEvent&) = default;
};

inline ojson timing_event_json(const TimingEvent& e) {
  return {{"user", e.user},         {"session", e.session},         {"batch", e.batch},  {"t_ms", e.t_ms},
          {"pattern_id", e.pattern_id}, {"duration_ms", e.duration_ms}, {"correct", e.correct}};
}

inline TimingEvent timing_event_from_json(const json& j, std::size_t n) {
  TimingEvent e;
  try {
    e.user = j.at("user").get<std::string>();
    e.session = j.at("session").get<std::string>();
    e.batch = j.at("batch").get<int>();
    e.t_ms = j.at("t_ms").get<double>();
    e.pattern_id = j.at("pattern_id").get<int>();
    e.duration_ms = j.at("duration_ms").get<double>();
    e.correct = j.at("correct").get<bool>();
  } catch (const json::exception& ex) {
    throw ParseError(std::string("bad timing event: ") + ex.what(), n);
  }
  if (e.batch != 1 && e.batch != 2) throw ParseError("batch must be 1 or 2", n);
  if (e.pattern_id < 1 || e.pattern_id > gesture::kPatternCount) throw ParseError("pattern id outside 1..17", n);
  if (!(e.duration_ms >= 0.0)) throw ParseError("duration must be >= 0", n);
  return e;
}

inline std::vector<TimingEvent> parse_timing_log(const std::string& text) {
  std::vector<TimingEvent> out;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    out.push_back(timing_event_from_json(parse_json_line(line, n), n));
  }
  return out;
}

inline std::vector<TimingEvent> read_timing_log(const fs::path& p) { return parse_timing_log(read_text(p)); }

}  // namespace gazekit::harness
