#pragma once

#include <cstddef>
#include <random>

#include "gazekit/error.hpp"
#include "gazekit/geometry/gaze.hpp"

namespace gazekit::phantom {

using geometry::Vec2;
using geometry::Vec3;

/// Closed interval a per-sample appearance value is drawn from.
struct Range {
  double lo = 0.0;
  double hi = 0.0;

  double sample(std::mt19937_64& rng) const {
    if (hi <= lo) return lo;
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  }
};

/// Simulated eye + camera rig.
///
/// The camera sits at the origin looking along -z; the eyeball centre is at
/// `eye_center_mm` in camera coordinates. The camera is assumed to sit
/// `camera_elevation_deg` below the eye's straight-ahead axis (30 degrees by
/// default, an assumption for a near-eye headset camera); the eyelid aperture
/// is foreshortened vertically by the cosine of that angle.
struct PhantomConfig {
  double eyeball_radius_mm = 12.0;
  double iris_radius_mm = 6.0;
  double focal_px = 230.0;
  Vec2 principal_point{128.0, 96.0};
  Vec3 eye_center_mm{0.0, 0.0, -40.0};
  double camera_elevation_deg = 30.0;
  std::size_t width = 256;
  std::size_t height = 192;

  // Eyelid aperture, measured at the eyeball centre depth.
  double lid_half_width_mm = 14.0;
  double lid_opening = 0.5;   // apex height / half width before foreshortening
  double lid_follow = 0.5;    // fraction of the iris's vertical image offset the lids follow
  double lid_openness = 1.0;  // 1 = open, 0 = closed (blink)

  Range iris_darkness{0.12, 0.3};
  Range sclera_brightness{0.75, 0.92};
  Range skin_tone{0.45, 0.62};
  Range noise_sigma{0.0, 0.02};

  void validate() const {
    require(eyeball_radius_mm > iris_radius_mm && iris_radius_mm > 0.0, ErrorKind::Configuration,
            "phantom needs eyeball_radius > iris_radius > 0");
    require(focal_px > 0.0, ErrorKind::Configuration, "focal length must be positive");
    require(width >= 36 && height >= 36, ErrorKind::Configuration, "image must be at least 36x36");
    require(eye_center_mm.z() < -eyeball_radius_mm, ErrorKind::Configuration,
            "eyeball must lie fully in front of the camera");
    require(lid_half_width_mm > 0.0 && lid_opening > 0.0, ErrorKind::Configuration, "bad eyelid geometry");
    require(lid_openness >= 0.0 && lid_openness <= 1.0, ErrorKind::Configuration,
            "lid_openness must be in [0, 1]");
    for (const Range* r : {&iris_darkness, &sclera_brightness, &skin_tone, &noise_sigma})
      require(r->lo <= r->hi && r->lo >= 0.0, ErrorKind::Configuration, "bad appearance range");
  }

  /// Principal point centred on the image, camera aimed at the eyeball.
  static PhantomConfig with_size(std::size_t w, std::size_t h) {
    PhantomConfig c;
    const double s = static_cast<double>(w) / 256.0;
    c.width = w;
    c.height = h;
    c.focal_px *= s;
    c.principal_point = Vec2(static_cast<double>(w) / 2.0, static_cast<double>(h) / 2.0);
    return c;
  }
};

}  // namespace gazekit::phantom
