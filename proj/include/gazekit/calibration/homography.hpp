#pragma once

#include <array>
#include <cmath>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "gazekit/error.hpp"
#include "gazekit/geometry/gaze.hpp"

namespace gazekit::calibration {

using geometry::GazeDirection;
using geometry::Vec2;
using geometry::YawPitch;
using Mat3 = Eigen::Matrix3d;

/// Projective map from tangent-plane gaze (tan yaw, tan pitch) to screen pixels.
/// Stored with the bottom-right entry fixed at 1.
class Homography {
 public:
  Homography() : m_(Mat3::Identity()) {}

  explicit Homography(const Mat3& m) {
    require(std::abs(m(2, 2)) > 1e-300, ErrorKind::Calibration, "homography with zero bottom-right entry");
    m_ = m / m(2, 2);
    require(std::abs(m_.determinant()) > 1e-12, ErrorKind::Calibration, "homography is singular");
  }

  const Mat3& matrix() const { return m_; }
  double operator()(int r, int c) const { return m_(r, c); }

  bool is_affine() const { return m_(2, 0) == 0.0 && m_(2, 1) == 0.0; }

  Vec2 apply(const Vec2& p) const {
    const Eigen::Vector3d q = m_ * Eigen::Vector3d(p.x(), p.y(), 1.0);
    require(std::abs(q.z()) > 1e-12 * (std::abs(q.x()) + std::abs(q.y()) + 1.0), ErrorKind::Mapping,
            "point maps to infinity");
    return {q.x() / q.z(), q.y() / q.z()};
  }

  Homography inverse() const { return Homography(m_.inverse()); }

  Homography compose(const Homography& after) const { return Homography(after.m_ * m_); }

  /// Row-major entries.
  std::array<double, 9> values() const {
    std::array<double, 9> v{};
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) v[static_cast<std::size_t>(3 * r + c)] = m_(r, c);
    return v;
  }

  static Homography from_values(const std::array<double, 9>& v) {
    Mat3 m;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) m(r, c) = v[static_cast<std::size_t>(3 * r + c)];
    return Homography(m);
  }

 private:
  Mat3 m_;
};

/// Tangent-plane coordinates of a gaze angle pair.
inline Vec2 tangent_point(const YawPitch& a) {
  require(std::abs(a.yaw) < geometry::kPi / 2 && std::abs(a.pitch) < geometry::kPi / 2, ErrorKind::Domain,
          "gaze angle outside the front hemisphere");
  return {std::tan(a.yaw), std::tan(a.pitch)};
}

inline Vec2 tangent_point(const GazeDirection& g) {
  require(g.z() > 1e-12, ErrorKind::Mapping, "gaze points away from the screen");
  return {g.x() / g.z(), g.y() / g.z()};
}

enum class CalibrationMode { Projective, Affine };

namespace detail {

inline double cross2(const Vec2& a, const Vec2& b, const Vec2& c) {
  return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

inline void require_general_position(const std::array<Vec2, 4>& p, const char* space) {
  double scale = 0.0;
  for (const auto& q : p) scale = std::max(scale, q.norm());
  const double tol = 1e-10 * std::max(scale * scale, 1e-300);
  for (int skip = 0; skip < 4; ++skip) {
    std::array<Vec2, 3> t;
    int k = 0;
    for (int i = 0; i < 4; ++i)
      if (i != skip) t[static_cast<std::size_t>(k++)] = p[static_cast<std::size_t>(i)];
    require(std::abs(cross2(t[0], t[1], t[2])) > tol, ErrorKind::Calibration,
            std::string("three calibration corners are collinear in ") + space + " space");
  }
}

}  // namespace detail

/// Solves the 8-unknown linear system so each source point maps exactly to its
/// destination. Affine mode fits a 6-parameter affine map by least squares
/// instead (exact when the four correspondences are affine-consistent).
inline Homography fit_homography(const std::array<Vec2, 4>& src, const std::array<Vec2, 4>& dst,
                                 CalibrationMode mode = CalibrationMode::Projective) {
  detail::require_general_position(src, "gaze");
  detail::require_general_position(dst, "screen");
  Mat3 m = Mat3::Identity();
  if (mode == CalibrationMode::Projective) {
    Eigen::Matrix<double, 8, 8> a;
    Eigen::Matrix<double, 8, 1> b;
    for (int i = 0; i < 4; ++i) {
      const double x = src[static_cast<std::size_t>(i)].x(), y = src[static_cast<std::size_t>(i)].y();
      const double u = dst[static_cast<std::size_t>(i)].x(), v = dst[static_cast<std::size_t>(i)].y();
      a.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
      a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
      b(2 * i) = u;
      b(2 * i + 1) = v;
    }
    const Eigen::FullPivLU<Eigen::Matrix<double, 8, 8>> lu(a);
    require(lu.isInvertible(), ErrorKind::Calibration, "calibration system is singular");
    const Eigen::Matrix<double, 8, 1> h = lu.solve(b);
    m << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0;
  } else {
    Eigen::Matrix<double, 4, 3> a;
    Eigen::Matrix<double, 4, 2> b;
    for (int i = 0; i < 4; ++i) {
      a.row(i) << src[static_cast<std::size_t>(i)].x(), src[static_cast<std::size_t>(i)].y(), 1.0;
      b.row(i) << dst[static_cast<std::size_t>(i)].x(), dst[static_cast<std::size_t>(i)].y();
    }
    const Eigen::Matrix<double, 3, 2> x = a.colPivHouseholderQr().solve(b);
    m.row(0) << x(0, 0), x(1, 0), x(2, 0);
    m.row(1) << x(0, 1), x(1, 1), x(2, 1);
  }
  return Homography(m);
}

/// Corner order: top-left, top-right, bottom-left, bottom-right.
inline Homography calibrate(const std::array<YawPitch, 4>& corner_gazes, const std::array<Vec2, 4>& corner_screen,
                            CalibrationMode mode = CalibrationMode::Projective) {
  std::array<Vec2, 4> src;
  for (std::size_t i = 0; i < 4; ++i) src[i] = tangent_point(corner_gazes[i]);
  return fit_homography(src, corner_screen, mode);
}

inline Vec2 gaze_to_screen(const Homography& h, const GazeDirection& g) { return h.apply(tangent_point(g)); }

/// Screen point back to the gaze direction that maps onto it.
inline GazeDirection screen_to_gaze(const Homography& h, const Vec2& px) {
  const Vec2 t = h.inverse().apply(px);
  return GazeDirection::from_vector(geometry::Vec3(t.x(), t.y(), 1.0));
}

/// "calibration = h00,h01,...,h22" line for the session config file.
inline std::string format_calibration(const Homography& h) {
  std::ostringstream os;
  os.precision(17);
  os << "calibration = ";
  const auto v = h.values();
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

/// Parses the comma-separated 9 reals of a calibration value.
inline Homography parse_calibration(const std::string& value) {
  std::array<double, 9> v{};
  std::istringstream is(value);
  std::string item;
  std::size_t n = 0;
  while (std::getline(is, item, ',')) {
    require(n < 9, ErrorKind::Configuration, "calibration needs exactly 9 values");
    try {
      std::size_t used = 0;
      v[n] = std::stod(item, &used);
      require(item.find_first_not_of(" \t", used) == std::string::npos, ErrorKind::Configuration,
              "bad calibration value '" + item + "'");
    } catch (const std::logic_error&) {
      fail(ErrorKind::Configuration, "bad calibration value '" + item + "'");
    }
    ++n;
  }
  require(n == 9, ErrorKind::Configuration, "calibration needs exactly 9 values, got " + std::to_string(n));
  return Homography::from_values(v);
}

}  // namespace gazekit::calibration
