#pragma once

#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "gazekit/error.hpp"
#include "gazekit/geometry/gaze.hpp"

namespace gazekit::geometry {

struct EllipseParams {
  Vec2 center = Vec2::Zero();
  double semi_major = 0.0;
  double semi_minor = 0.0;
  double angle = 0.0;  // of the major axis, in [0, pi)

  /// Point at parameter t on the boundary.
  Vec2 point_at(double t) const {
    const double c = std::cos(angle), s = std::sin(angle);
    const double x = semi_major * std::cos(t), y = semi_minor * std::sin(t);
    return center + Vec2(c * x - s * y, s * x + c * y);
  }

  /// Normalized radius: < 1 inside, 1 on the boundary.
  double radial(const Vec2& p) const {
    const double c = std::cos(angle), s = std::sin(angle);
    const Vec2 d = p - center;
    const double u = c * d.x() + s * d.y(), v = -s * d.x() + c * d.y();
    return std::sqrt((u * u) / (semi_major * semi_major) + (v * v) / (semi_minor * semi_minor));
  }
};

/// Conic coefficients (A, B, C, D, E, F) of A x^2 + B xy + C y^2 + D x + E y + F = 0.
using Conic = Eigen::Matrix<double, 6, 1>;

inline EllipseParams conic_to_ellipse(Conic q) {
  // The fit fixes the conic only up to sign; make the quadratic part positive definite.
  if (q[0] + q[2] < 0.0) q = -q;
  const double a = q[0], b = q[1], c = q[2], d = q[3], e = q[4], f = q[5];
  const double disc = 4.0 * a * c - b * b;
  require(disc > 0.0, ErrorKind::Fit, "conic is not an ellipse");
  Eigen::Matrix2d m;
  m << 2 * a, b, b, 2 * c;
  const Vec2 center = m.lu().solve(Vec2(-d, -e));
  const double f0 = a * center.x() * center.x() + b * center.x() * center.y() +
                    c * center.y() * center.y() + d * center.x() + e * center.y() + f;
  Eigen::Matrix2d quad;
  quad << a, b / 2, b / 2, c;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(quad);
  const Vec2 lambda = eig.eigenvalues();  // ascending
  const double r0 = -f0 / lambda[0], r1 = -f0 / lambda[1];
  require(r0 > 0.0 && r1 > 0.0 && std::isfinite(r0) && std::isfinite(r1), ErrorKind::Fit,
          "conic has imaginary axes");
  // Smaller eigenvalue -> longer axis.
  EllipseParams out;
  out.center = center;
  out.semi_major = std::sqrt(r0);
  out.semi_minor = std::sqrt(r1);
  const Vec2 major = eig.eigenvectors().col(0);
  double theta = std::atan2(major.y(), major.x());
  if (theta < 0) theta += kPi;
  if (theta >= kPi) theta -= kPi;
  out.angle = theta;
  return out;
}

/// Direct least-squares ellipse fit with the 4AC - B^2 = 1 constraint
/// (numerically stable block formulation). Exact on noiseless samples.
inline EllipseParams fit_ellipse(std::span<const Vec2> points) {
  require(points.size() >= 5, ErrorKind::Fit, "ellipse fit needs at least 5 points");
  Vec2 mean = Vec2::Zero();
  for (const auto& p : points) mean += p;
  mean /= static_cast<double>(points.size());
  double scale = 0.0;
  for (const auto& p : points) scale = std::max(scale, (p - mean).cwiseAbs().maxCoeff());
  require(scale > 0.0, ErrorKind::Fit, "ellipse fit: all points coincide");

  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd d1(n, 3), d2(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec2 p = (points[static_cast<std::size_t>(i)] - mean) / scale;
    d1.row(i) << p.x() * p.x(), p.x() * p.y(), p.y() * p.y();
    d2.row(i) << p.x(), p.y(), 1.0;
  }
  const Eigen::Matrix3d s1 = d1.transpose() * d1;
  const Eigen::Matrix3d s2 = d1.transpose() * d2;
  const Eigen::Matrix3d s3 = d2.transpose() * d2;
  Eigen::FullPivLU<Eigen::Matrix3d> s3_lu(s3);
  s3_lu.setThreshold(1e-12);
  require(s3_lu.isInvertible(), ErrorKind::Fit, "ellipse fit: points are collinear or degenerate");
  const Eigen::Matrix3d t = -s3_lu.solve(s2.transpose());
  const Eigen::Matrix3d m0 = s1 + s2 * t;
  Eigen::Matrix3d m;
  m.row(0) = m0.row(2) / 2.0;
  m.row(1) = -m0.row(1);
  m.row(2) = m0.row(0) / 2.0;

  Eigen::EigenSolver<Eigen::Matrix3d> eig(m);
  const auto vecs = eig.eigenvectors();
  int best = -1;
  double best_cond = 0.0;
  for (int k = 0; k < 3; ++k) {
    const Eigen::Vector3d v = vecs.col(k).real();
    const double cond = 4.0 * v[0] * v[2] - v[1] * v[1];
    if (cond > best_cond) {
      best_cond = cond;
      best = k;
    }
  }
  require(best >= 0, ErrorKind::Fit, "ellipse fit: no elliptical solution (hyperbolic or degenerate)");
  const Eigen::Vector3d a1 = vecs.col(best).real();
  const Eigen::Vector3d a2 = t * a1;
  Conic q;
  q << a1, a2;
  EllipseParams e = conic_to_ellipse(q);
  e.center = e.center * scale + mean;
  e.semi_major *= scale;
  e.semi_minor *= scale;
  return e;
}

inline EllipseParams fit_ellipse(const std::vector<Vec2>& points) {
  return fit_ellipse(std::span<const Vec2>(points.data(), points.size()));
}

}  // namespace gazekit::geometry
