#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "gazekit/gesture/catalog.hpp"
#include "gazekit/gesture/trajectory.hpp"
#include "gazekit/phantom/sampling.hpp"

namespace gazekit::gesture {

/// Per-subject drawing style.
struct SubjectStyle {
  double speed = 1.2;            // normalized units per second
  double jitter_scale = 1.0;     // multiplies the base 0.01 jitter
  double overshoot_max = 0.03;   // corner overshoot, normalized units
  double sample_rate_hz = 60.0;
};

inline SubjectStyle subject_style(std::uint64_t master_seed, int subject) {
  std::mt19937_64 rng(phantom::derive_seed(master_seed, 0x50000u + static_cast<std::uint64_t>(subject)));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SubjectStyle s;
  s.speed = 0.8 + 0.8 * u(rng);
  s.jitter_scale = 0.6 + 0.8 * u(rng);
  s.overshoot_max = 0.01 + 0.04 * u(rng);
  return s;
}

/// Parameters of the drawing-difficulty perturbations.
struct StressModel {
  double squash_min = 0.75;    // anisotropic squash factor drawn from [squash_min, 1]
  double wobble = 0.03;        // low-frequency wobble amplitude, normalized units
  double heading_drift = 0.3;  // heading error per sqrt(radian) of smooth turning
  double length_drift = 0.1;   // log step-length error per sqrt(radian) of smooth turning
};

struct SynthOptions {
  bool transform = true;   // random similarity of the template
  bool jitter = true;      // per-point Gaussian jitter
  bool overshoot = true;   // overshoot at sharp corners
  bool stress = false;     // drawing-difficulty perturbations, see stress_perturb
  StressModel stress_model;
  static constexpr double kJitterSigma = 0.01;
};

/// Random similarity: scale about the centre, rotation, then a translation
/// that keeps every waypoint inside [0,1]^2.
struct SimilarityTransform {
  double scale = 1.0;
  double rotation_deg = 0.0;
  Vec2 translation = Vec2::Zero();

  Vec2 apply(const Vec2& p) const {
    const double a = geometry::deg2rad(rotation_deg);
    const Vec2 d = p - Vec2(0.5, 0.5);
    return Vec2(0.5, 0.5) + translation +
           scale * Vec2(std::cos(a) * d.x() - std::sin(a) * d.y(), std::sin(a) * d.x() + std::cos(a) * d.y());
  }

  std::vector<Vec2> apply(const std::vector<Vec2>& pts) const {
    std::vector<Vec2> out;
    out.reserve(pts.size());
    for (const auto& p : pts) out.push_back(apply(p));
    return out;
  }
};

/// Draws scale in [0.7, 1.3] and rotation in [-15, 15] degrees, redrawing until
/// the shape fits the unit square, then a uniform in-bounds translation.
inline SimilarityTransform random_similarity(const PatternTemplate& tpl, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (;;) {
    SimilarityTransform t;
    t.scale = 0.7 + 0.6 * u(rng);
    t.rotation_deg = -15.0 + 30.0 * u(rng);
    const auto pts = t.apply(tpl.waypoints);
    Vec2 lo = pts.front(), hi = pts.front();
    for (const auto& p : pts) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    if (hi.x() - lo.x() > 1.0 || hi.y() - lo.y() > 1.0) continue;
    t.translation = Vec2(-lo.x() + (1.0 - (hi.x() - lo.x())) * u(rng), -lo.y() + (1.0 - (hi.y() - lo.y())) * u(rng));
    return t;
  }
}

/// Waypoints shown to a user for one trial: the template under a random similarity.
inline std::vector<Vec2> indicator_waypoints(const PatternTemplate& tpl, std::uint64_t seed) {
  tpl.validate();
  std::mt19937_64 rng(seed);
  return random_similarity(tpl, rng).apply(tpl.waypoints);
}

namespace detail {

inline double path_length(const std::vector<Vec2>& w) {
  double s = 0.0;
  for (std::size_t i = 1; i < w.size(); ++i) s += (w[i] - w[i - 1]).norm();
  return s;
}

// Point at arc length s along the polyline.
inline Vec2 point_at_length(const std::vector<Vec2>& w, double s) {
  for (std::size_t i = 1; i < w.size(); ++i) {
    const double len = (w[i] - w[i - 1]).norm();
    if (s <= len || i + 1 == w.size()) return w[i - 1] + (len > 0 ? std::min(s / len, 1.0) : 0.0) * (w[i] - w[i - 1]);
    s -= len;
  }
  return w.back();
}

// Imperfections of eye-drawn shapes. Every pattern gets an anisotropic squash
// and a smooth low-frequency wobble. Smooth runs (stretches between sharp
// corners) are drawn from memory without a target to fixate, so heading and
// step-length errors accumulate with the amount of turning along the run; an
// open run is pulled back onto its visible end point, while a closed loop has
// nothing to aim for and starts at an arbitrary point of the ring.
inline std::vector<Vec2> stress_perturb(const PatternTemplate& tpl, std::vector<Vec2> w, std::mt19937_64& rng,
                                        const StressModel& m) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n01(0.0, 1.0);
  if (tpl.closed && w.size() >= 3) {
    const auto start = static_cast<std::size_t>(u(rng) * static_cast<double>(w.size() - 1));
    std::vector<Vec2> ring(w.begin() + static_cast<std::ptrdiff_t>(start), w.end() - 1);
    ring.insert(ring.end(), w.begin(), w.begin() + static_cast<std::ptrdiff_t>(start) + 1);
    w = std::move(ring);
  }

  // Split into smooth runs at sharp corners.
  std::vector<std::size_t> anchors{0};
  for (std::size_t i = 1; i + 1 < w.size(); ++i) {
    const Vec2 a = w[i] - w[i - 1], b = w[i + 1] - w[i];
    if (a.norm() > 0 && b.norm() > 0 && a.normalized().dot(b.normalized()) < std::cos(geometry::deg2rad(30.0)))
      anchors.push_back(i);
  }
  anchors.push_back(w.size() - 1);
  std::vector<Vec2> out{w.front()};
  for (std::size_t r = 0; r + 1 < anchors.size(); ++r) {
    const std::size_t a = anchors[r], b = anchors[r + 1];
    std::vector<Vec2> run{out.back()};
    double heading = 0.0, stretch = 0.0, prev_dir = 0.0;
    for (std::size_t i = a + 1; i <= b; ++i) {
      const Vec2 seg = w[i] - w[i - 1];
      const double dir = std::atan2(seg.y(), seg.x());
      if (i > a + 1) {
        const double turn = std::remainder(dir - prev_dir, 2 * geometry::kPi);
        heading += m.heading_drift * std::sqrt(std::abs(turn)) * n01(rng);
        stretch = std::clamp(stretch + m.length_drift * std::sqrt(std::abs(turn)) * n01(rng), -0.7, 0.7);
      }
      prev_dir = dir;
      const double c = std::cos(heading), s = std::sin(heading);
      run.push_back(run.back() + std::exp(stretch) * Vec2(c * seg.x() - s * seg.y(), s * seg.x() + c * seg.y()));
    }
    // Open runs end on their end point; the closing run of a loop does not.
    const bool anchored_end = !(tpl.closed && r + 2 == anchors.size());
    if (anchored_end && run.size() > 1) {
      const Vec2 miss = w[b] - run.back();
      std::vector<double> arc(run.size(), 0.0);
      for (std::size_t i = 1; i < run.size(); ++i) arc[i] = arc[i - 1] + (run[i] - run[i - 1]).norm();
      const double total = std::max(arc.back(), 1e-12);
      for (std::size_t i = 1; i < run.size(); ++i) run[i] += (arc[i] / total) * miss;
      run.back() = w[b];
    }
    out.insert(out.end(), run.begin() + 1, run.end());
  }
  w = std::move(out);

  const bool squash_x = u(rng) < 0.5;
  const double squash = m.squash_min + (1.0 - m.squash_min) * u(rng);
  const double f1 = 1.0 + 2.0 * u(rng), f2 = 1.0 + 2.0 * u(rng);
  const double p1 = 2 * geometry::kPi * u(rng), p2 = 2 * geometry::kPi * u(rng);
  const double total = std::max(path_length(w), 1e-12);
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (i > 0) s += (w[i] - w[i - 1]).norm();
    const double t = s / total;
    Vec2 d = w[i] - Vec2(0.5, 0.5);
    (squash_x ? d.x() : d.y()) *= squash;
    d += m.wobble * Vec2(std::sin(2 * geometry::kPi * f1 * t + p1), std::sin(2 * geometry::kPi * f2 * t + p2));
    w[i] = Vec2(0.5, 0.5) + d;
  }
  return w;
}

// Overshoot past each sharp interior corner along the incoming direction.
inline std::vector<Vec2> add_overshoot(const std::vector<Vec2>& w, double max_len, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Vec2> out{w.front()};
  for (std::size_t i = 1; i + 1 < w.size(); ++i) {
    const Vec2 din = w[i] - w[i - 1], dout = w[i + 1] - w[i];
    out.push_back(w[i]);
    if (din.norm() == 0.0 || dout.norm() == 0.0) continue;
    const double cos_turn = din.normalized().dot(dout.normalized());
    if (cos_turn < std::cos(geometry::deg2rad(30.0))) {
      out.push_back(w[i] + max_len * u(rng) * din.normalized());
      out.push_back(w[i]);
    }
  }
  out.push_back(w.back());
  return out;
}

}  // namespace detail

/// Simulated gaze trajectory for one trial. Waypoints are traversed at constant
/// speed and sampled at the style's rate, every waypoint included; points then
/// get Gaussian jitter. Normalized points become gaze through the same tangent
/// mapping used for pointer input.
inline GazeTrajectory synthesize_gesture(const PatternTemplate& tpl, std::uint64_t seed,
                                         const SubjectStyle& style = {}, const SynthOptions& opt = {}) {
  tpl.validate();
  std::mt19937_64 rng(seed);
  std::vector<Vec2> w = opt.transform ? random_similarity(tpl, rng).apply(tpl.waypoints) : tpl.waypoints;
  if (opt.stress) w = detail::stress_perturb(tpl, std::move(w), rng, opt.stress_model);
  if (opt.overshoot) w = detail::add_overshoot(w, style.overshoot_max, rng);

  const double step = style.speed / style.sample_rate_hz;
  std::vector<Vec2> pts;
  for (std::size_t i = 0; i + 1 < w.size(); ++i) {
    const Vec2 a = w[i], b = w[i + 1];
    const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((b - a).norm() / step)));
    for (std::size_t k = 0; k < n; ++k) pts.push_back(a + (static_cast<double>(k) / static_cast<double>(n)) * (b - a));
  }
  pts.push_back(w.back());

  if (opt.jitter) {
    std::normal_distribution<double> n(0.0, SynthOptions::kJitterSigma * style.jitter_scale);
    for (auto& p : pts) p += Vec2(n(rng), n(rng));
  }

  GazeTrajectory t;
  t.label = tpl.id;
  const double dt = 1000.0 / style.sample_rate_hz;
  for (std::size_t i = 0; i < pts.size(); ++i)
    t.samples.push_back({static_cast<double>(i) * dt, gaze_from_pointer(pts[i].x(), pts[i].y())});
  return t;
}

}  // namespace gazekit::gesture
