#pragma once

#include <array>
#include <bitset>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "gazekit/error.hpp"
#include "gazekit/geometry/ellipse.hpp"
#include "gazekit/geometry/gaze.hpp"
#include "gazekit/phantom/config.hpp"

namespace gazekit::geometry {

using phantom::PhantomConfig;

inline constexpr std::size_t kLandmarkCount = 55;
inline constexpr std::size_t kCornerBegin = 0, kCornerCount = 7;
inline constexpr std::size_t kEyelidBegin = 7, kEyelidCount = 16;
inline constexpr std::size_t kIrisBegin = 23, kIrisCount = 32;

using LandmarkMask = std::bitset<kLandmarkCount>;

inline LandmarkMask all_landmarks() { return LandmarkMask{}.set(); }

/// 55 ordered image points:
///   0..6   eye-corner region (outer canthus + 2 neighbours, inner canthus + 3 caruncle points)
///   7..22  eyelid contour, counterclockwise on screen starting at the outer corner
///          (7 = outer corner, 8..14 upper lid, 15 = inner corner, 16..22 lower lid)
///   23..54 iris edge, counterclockwise on screen starting at the point along camera +x
struct EyeLandmarks {
  std::array<Vec2, kLandmarkCount> points{};

  Vec2& operator[](std::size_t i) { return points[i]; }
  const Vec2& operator[](std::size_t i) const { return points[i]; }

  std::vector<Vec2> iris() const { return {points.begin() + kIrisBegin, points.end()}; }

  EyeLandmarks scaled(double s) const {
    EyeLandmarks out = *this;
    for (auto& p : out.points) p *= s;
    return out;
  }
};

/// Pinhole projection; camera looks along -z and image v grows downward.
inline Vec2 project_point(const Vec3& p, const PhantomConfig& cfg) {
  require(p.z() < -1e-9, ErrorKind::Projection, "point lies behind the camera plane");
  const double depth = -p.z();
  return {cfg.principal_point.x() + cfg.focal_px * p.x() / depth,
          cfg.principal_point.y() - cfg.focal_px * p.y() / depth};
}

/// Distance from the eyeball centre to the iris plane.
inline double iris_plane_offset(const PhantomConfig& cfg) {
  const double r = cfg.eyeball_radius_mm, ir = cfg.iris_radius_mm;
  return std::sqrt(r * r - ir * ir);
}

inline Vec3 iris_center_3d(const GazeDirection& g, const PhantomConfig& cfg) {
  return cfg.eye_center_mm + iris_plane_offset(cfg) * g.vector();
}

/// Image position of the pupil (projected iris centre).
inline Vec2 project_pupil(const GazeDirection& g, const PhantomConfig& cfg) {
  return project_point(iris_center_3d(g, cfg), cfg);
}

/// Parametric eyelid aperture in image space.
struct LidAperture {
  Vec2 center;
  double half_width;
  double upper;  // apex height above the centre line
  double lower;  // apex depth below the centre line

  Vec2 point(double t) const {
    const double h = std::sin(t) >= 0.0 ? upper : lower;
    return {center.x() + half_width * std::cos(t), center.y() - h * std::sin(t)};
  }

  /// Vertical extent [top, bottom] at column x, if x lies inside the aperture.
  std::optional<std::pair<double, double>> span_at(double x) const {
    const double c = (x - center.x()) / half_width;
    if (c <= -1.0 || c >= 1.0) return std::nullopt;
    const double s = std::sqrt(1.0 - c * c);
    return std::make_pair(center.y() - upper * s, center.y() + lower * s);
  }

  bool contains(const Vec2& p) const {
    const auto span = span_at(p.x());
    return span && p.y() >= span->first && p.y() <= span->second;
  }
};

inline LidAperture lid_aperture(const GazeDirection& g, const PhantomConfig& cfg) {
  const double depth = -cfg.eye_center_mm.z();
  LidAperture lid;
  lid.center = project_point(cfg.eye_center_mm, cfg);
  lid.half_width = cfg.focal_px * cfg.lid_half_width_mm / depth;
  const double base = cfg.lid_opening * lid.half_width * std::cos(deg2rad(cfg.camera_elevation_deg));
  const double shift = cfg.lid_follow * (project_pupil(g, cfg).y() - lid.center.y());
  lid.upper = std::max(0.0, cfg.lid_openness * (base - shift));
  lid.lower = std::max(0.0, cfg.lid_openness * (base + shift));
  return lid;
}

/// Forward model: gaze -> 55 landmarks.
inline EyeLandmarks project_gaze_to_landmarks(const GazeDirection& g, const PhantomConfig& cfg) {
  EyeLandmarks lm;
  const Vec3 gv = g.vector();
  const Vec3 center = iris_center_3d(g, cfg);
  const Vec3 to_camera = -center;
  require(gv.dot(to_camera) > 0.0, ErrorKind::Projection, "iris faces away from the camera");

  Vec3 e1 = Vec3::UnitX() - gv.x() * gv;
  require(e1.norm() > 1e-9, ErrorKind::Projection, "gaze parallel to camera x axis");
  e1.normalize();
  const Vec3 e2 = gv.cross(e1);
  const double ir = cfg.iris_radius_mm;
  for (std::size_t j = 0; j < kIrisCount; ++j) {
    const double phi = 2.0 * kPi * static_cast<double>(j) / static_cast<double>(kIrisCount);
    lm[kIrisBegin + j] = project_point(center + ir * (std::cos(phi) * e1 + std::sin(phi) * e2), cfg);
  }

  const LidAperture lid = lid_aperture(g, cfg);
  for (std::size_t k = 0; k < kEyelidCount; ++k)
    lm[kEyelidBegin + k] = lid.point(2.0 * kPi * static_cast<double>(k) / static_cast<double>(kEyelidCount));

  const double a = lid.half_width, d = 0.06 * a;
  const Vec2 outer = lid.center + Vec2(a, 0.0), inner = lid.center - Vec2(a, 0.0);
  lm[0] = outer;
  lm[1] = outer + Vec2(d, -0.5 * d);
  lm[2] = outer + Vec2(d, 0.5 * d);
  lm[3] = inner;
  lm[4] = inner + Vec2(d, -0.6 * d);
  lm[5] = inner + Vec2(2.0 * d, 0.0);
  lm[6] = inner + Vec2(d, 0.6 * d);
  return lm;
}

/// Mean vertical eyelid opening over horizontal eye width. Upper point k pairs
/// with lower point 16 - k on the eyelid contour.
inline double eye_aspect_ratio(const EyeLandmarks& lm) {
  const Vec2 outer = lm[kEyelidBegin], inner = lm[kEyelidBegin + kEyelidCount / 2];
  const double width = (outer - inner).norm();
  require(width > 1e-12, ErrorKind::DegenerateLandmarks, "eye width is zero");
  double opening = 0.0;
  for (std::size_t k = 1; k < kEyelidCount / 2; ++k)
    opening += (lm[kEyelidBegin + k] - lm[kEyelidBegin + kEyelidCount - k]).norm();
  return opening / static_cast<double>(kEyelidCount / 2 - 1) / width;
}

struct InversionOptions {
  double step_tolerance = 1e-10;  // radians
  int max_iterations = 50;
  double fd_step = 1e-7;
};

namespace detail {

inline std::optional<Eigen::VectorXd> residuals(const YawPitch& yp, const EyeLandmarks& lm,
                                                const LandmarkMask& mask, const PhantomConfig& cfg) {
  if (std::abs(yp.yaw) >= 1.4 || std::abs(yp.pitch) >= 1.4) return std::nullopt;
  EyeLandmarks model;
  try {
    model = project_gaze_to_landmarks(yaw_pitch_to_vector(yp), cfg);
  } catch (const Error&) {
    return std::nullopt;
  }
  Eigen::VectorXd r(2 * static_cast<Eigen::Index>(mask.count()));
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    if (!mask[i]) continue;
    r[k++] = model[i].x() - lm[i].x();
    r[k++] = model[i].y() - lm[i].y();
  }
  return r;
}

// Back-projects an image position of the pupil to an initial gaze.
inline YawPitch initial_guess(const Vec2& pupil, const PhantomConfig& cfg) {
  const double d = iris_plane_offset(cfg);
  Vec3 g(0.0, 0.0, 1.0);
  for (int it = 0; it < 5; ++it) {
    const double depth = -(cfg.eye_center_mm.z() + d * g.z());
    const double x = (pupil.x() - cfg.principal_point.x()) * depth / cfg.focal_px - cfg.eye_center_mm.x();
    const double y = -(pupil.y() - cfg.principal_point.y()) * depth / cfg.focal_px - cfg.eye_center_mm.y();
    double gx = std::clamp(x / d, -0.9, 0.9), gy = std::clamp(y / d, -0.9, 0.9);
    const double n2 = gx * gx + gy * gy;
    if (n2 > 0.81) {
      gx *= 0.9 / std::sqrt(n2);
      gy *= 0.9 / std::sqrt(n2);
    }
    g = Vec3(gx, gy, std::sqrt(1.0 - gx * gx - gy * gy));
  }
  return vector_to_yaw_pitch(GazeDirection::from_vector(g));
}

}  // namespace detail

/// Least-squares inversion of the forward model over (yaw, pitch): damped
/// Gauss-Newton started from the back-projected iris-ellipse centre.
inline GazeDirection landmarks_to_gaze(const EyeLandmarks& lm, const PhantomConfig& cfg,
                                       const LandmarkMask& mask = all_landmarks(),
                                       const InversionOptions& opt = {}) {
  std::vector<Vec2> iris;
  for (std::size_t j = kIrisBegin; j < kLandmarkCount; ++j)
    if (mask[j]) iris.push_back(lm[j]);
  require(mask.count() >= 3, ErrorKind::Estimation, "need at least 3 landmarks");

  Vec2 pupil;
  if (iris.size() >= 5) {
    pupil = fit_ellipse(iris).center;
  } else {
    require(!iris.empty(), ErrorKind::Fit, "no iris landmarks to initialise from");
    pupil = Vec2::Zero();
    for (const auto& p : iris) pupil += p;
    pupil /= static_cast<double>(iris.size());
  }

  YawPitch yp = detail::initial_guess(pupil, cfg);
  auto r = detail::residuals(yp, lm, mask, cfg);
  require(r.has_value(), ErrorKind::Estimation, "initial guess is outside the projection domain");
  double cost = r->squaredNorm();
  double lambda = 0.0;
  double last_step = std::numeric_limits<double>::infinity();

  for (int it = 0; it < opt.max_iterations; ++it) {
    Eigen::MatrixXd jac(r->size(), 2);
    const double h = opt.fd_step;
    bool ok = true;
    for (int c = 0; c < 2 && ok; ++c) {
      YawPitch plus = yp, minus = yp;
      (c == 0 ? plus.yaw : plus.pitch) += h;
      (c == 0 ? minus.yaw : minus.pitch) -= h;
      auto rp = detail::residuals(plus, lm, mask, cfg);
      auto rm = detail::residuals(minus, lm, mask, cfg);
      if (!rp || !rm) {
        ok = false;
        break;
      }
      jac.col(c) = (*rp - *rm) / (2.0 * h);
    }
    if (!ok) throw EstimationError("jacobian left the projection domain", std::sqrt(cost / r->size()));

    const Eigen::Matrix2d jtj = jac.transpose() * jac;
    const Eigen::Vector2d jtr = jac.transpose() * *r;
    bool accepted = false;
    for (int attempt = 0; attempt < 30; ++attempt) {
      Eigen::Matrix2d a = jtj;
      a.diagonal() += Eigen::Vector2d::Constant(lambda) + lambda * jtj.diagonal();
      const Eigen::Vector2d step = -a.ldlt().solve(jtr);
      const YawPitch cand{yp.yaw + step[0], yp.pitch + step[1]};
      auto rc = detail::residuals(cand, lm, mask, cfg);
      if (rc && rc->squaredNorm() <= cost) {
        yp = cand;
        r = std::move(rc);
        cost = r->squaredNorm();
        last_step = step.norm();
        lambda = lambda > 0.0 ? lambda * 0.1 : 0.0;
        if (lambda < 1e-12) lambda = 0.0;
        accepted = true;
        break;
      }
      lambda = lambda > 0.0 ? lambda * 10.0 : 1e-6;
      if (step.norm() < opt.step_tolerance) {
        last_step = step.norm();
        break;
      }
    }
    if (!accepted || last_step < opt.step_tolerance) break;
  }
  if (!(last_step < 1e-6)) throw EstimationError("Gauss-Newton did not converge", std::sqrt(cost / r->size()));
  return yaw_pitch_to_vector(yp);
}

}  // namespace gazekit::geometry
