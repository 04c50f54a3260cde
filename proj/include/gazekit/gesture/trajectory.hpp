#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "gazekit/geometry/eye_model.hpp"

namespace gazekit::gesture {

using geometry::GazeDirection;
using geometry::Vec2;

struct GazeSample {
  double t_ms;
  GazeDirection gaze;
};

/// Time-ordered gaze samples, optionally labelled with a pattern id.
struct GazeTrajectory {
  std::vector<GazeSample> samples;
  std::optional<int> label;

  std::size_t size() const { return samples.size(); }

  void validate() const {
    require(samples.size() >= 2, ErrorKind::DegenerateGesture,
            "a gesture needs at least 2 samples, got " + std::to_string(samples.size()));
    for (std::size_t i = 1; i < samples.size(); ++i)
      require(samples[i].t_ms > samples[i - 1].t_ms, ErrorKind::DegenerateGesture,
              "timestamps must be strictly increasing (sample " + std::to_string(i) + ")");
  }
};

/// Screen-style tangent coordinates: x = tan yaw, y = -tan pitch (y grows downward).
inline Vec2 tangent_screen_point(const GazeDirection& g) {
  require(g.z() > 1e-12, ErrorKind::Domain, "gaze points away from the view plane");
  return {g.x() / g.z(), -g.y() / g.z()};
}

/// Inverse of tangent_screen_point for pointer input in [0,1]^2: the unit square
/// is centred on straight-ahead gaze.
inline GazeDirection gaze_from_pointer(double x, double y) {
  return GazeDirection::from_vector(geometry::Vec3(x - 0.5, 0.5 - y, 1.0));
}

/// Projects to tangent coordinates and fits the bounding box isotropically into
/// [0.1, 0.9]^2, centred, aspect preserved.
inline std::vector<Vec2> normalize_points(const std::vector<Vec2>& pts) {
  require(pts.size() >= 2, ErrorKind::DegenerateGesture, "a gesture needs at least 2 samples");
  Vec2 lo = pts.front(), hi = pts.front();
  for (const auto& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Vec2 extent = hi - lo;
  const double span = std::max(extent.x(), extent.y());
  require(span > 1e-12 * std::max(1.0, hi.cwiseAbs().maxCoeff()), ErrorKind::DegenerateGesture,
          "gesture has no spatial extent");
  const double s = 0.8 / span;
  const Vec2 mid = 0.5 * (lo + hi);
  std::vector<Vec2> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back(Vec2(0.5, 0.5) + s * (p - mid));
  return out;
}

inline std::vector<Vec2> normalize_trajectory(const GazeTrajectory& t) {
  t.validate();
  std::vector<Vec2> pts;
  pts.reserve(t.size());
  for (const auto& s : t.samples) pts.push_back(tangent_screen_point(s.gaze));
  return normalize_points(pts);
}

struct BlinkConfig {
  double ear_threshold = 0.15;
  int min_closed_frames = 3;

  void validate() const {
    require(ear_threshold > 0.0 && ear_threshold < 1.0, ErrorKind::Parameter, "EAR threshold must be in (0, 1)");
    require(min_closed_frames >= 1, ErrorKind::Parameter, "min_closed_frames must be >= 1");
  }
};

struct EyeFrame {
  double t_ms;
  geometry::EyeLandmarks landmarks;
  GazeDirection gaze;
};

/// Splits a frame stream at blinks. A blink is a run of at least k consecutive
/// frames with EAR below the threshold; blink frames are dropped, and each
/// maximal stretch between blinks becomes one trajectory. Closed runs shorter
/// than k stay in the trajectory as ordinary frames.
inline std::vector<GazeTrajectory> segment_by_blink(const std::vector<EyeFrame>& frames, const BlinkConfig& cfg = {}) {
  cfg.validate();
  const std::size_t n = frames.size();
  std::vector<bool> closed(n);
  for (std::size_t i = 0; i < n; ++i) closed[i] = geometry::eye_aspect_ratio(frames[i].landmarks) < cfg.ear_threshold;

  std::vector<bool> blink(n, false);
  for (std::size_t i = 0; i < n;) {
    if (!closed[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && closed[j]) ++j;
    if (j - i >= static_cast<std::size_t>(cfg.min_closed_frames)) std::fill(blink.begin() + static_cast<std::ptrdiff_t>(i), blink.begin() + static_cast<std::ptrdiff_t>(j), true);
    i = j;
  }

  std::vector<GazeTrajectory> out;
  GazeTrajectory cur;
  for (std::size_t i = 0; i < n; ++i) {
    if (blink[i]) {
      if (!cur.samples.empty()) out.push_back(std::move(cur));
      cur = {};
      continue;
    }
    cur.samples.push_back({frames[i].t_ms, frames[i].gaze});
  }
  if (!cur.samples.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace gazekit::gesture
