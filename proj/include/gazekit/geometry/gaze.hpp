#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "gazekit/error.hpp"

namespace gazekit::geometry {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

inline constexpr double kPi = std::numbers::pi;
inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

/// Tangent-plane angles in radians: the direction is proportional to (tan yaw, tan pitch, 1).
/// Positive yaw turns toward camera +x, positive pitch toward camera +y.
struct YawPitch {
  double yaw = 0.0;
  double pitch = 0.0;
};

/// Unit gaze vector in camera coordinates. The camera looks along -z toward the
/// eye, so looking straight into the camera is (0, 0, 1).
class GazeDirection {
 public:
  GazeDirection() = default;

  static GazeDirection from_vector(const Vec3& v) {
    const double n = v.norm();
    require(std::isfinite(n) && n > 1e-300, ErrorKind::Domain, "gaze vector has zero length");
    GazeDirection g;
    g.v_ = v / n;
    return g;
  }

  const Vec3& vector() const { return v_; }
  double x() const { return v_.x(); }
  double y() const { return v_.y(); }
  double z() const { return v_.z(); }

  YawPitch yaw_pitch() const;
  double yaw() const { return yaw_pitch().yaw; }
  double pitch() const { return yaw_pitch().pitch; }

 private:
  Vec3 v_{0.0, 0.0, 1.0};
};

inline GazeDirection yaw_pitch_to_vector(YawPitch yp) {
  require(std::abs(yp.yaw) < kPi / 2 && std::abs(yp.pitch) < kPi / 2, ErrorKind::Gimbal,
          "yaw and pitch must lie strictly inside (-pi/2, pi/2)");
  return GazeDirection::from_vector(Vec3(std::tan(yp.yaw), std::tan(yp.pitch), 1.0));
}

inline YawPitch vector_to_yaw_pitch(const GazeDirection& g) {
  require(g.z() > 0.0, ErrorKind::Gimbal, "gaze must point into the front hemisphere (z > 0)");
  return {std::atan2(g.x(), g.z()), std::atan2(g.y(), g.z())};
}

inline YawPitch GazeDirection::yaw_pitch() const { return vector_to_yaw_pitch(*this); }

inline GazeDirection gaze_from_degrees(double yaw_deg, double pitch_deg) {
  return yaw_pitch_to_vector({deg2rad(yaw_deg), deg2rad(pitch_deg)});
}

/// Angle between two directions in degrees, in [0, 180].
/// Evaluated as atan2(|a x b|, a . b), which stays accurate near 0 and 180.
inline double angular_error(const Vec3& a, const Vec3& b) {
  const double na = a.norm(), nb = b.norm();
  require(na > 1e-300 && nb > 1e-300, ErrorKind::Domain, "angular_error needs non-zero vectors");
  const Vec3 ua = a / na, ub = b / nb;
  return rad2deg(std::atan2(ua.cross(ub).norm(), std::clamp(ua.dot(ub), -1.0, 1.0)));
}

inline double angular_error(const GazeDirection& a, const GazeDirection& b) {
  return angular_error(a.vector(), b.vector());
}

}  // namespace gazekit::geometry
