#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>
#include <vector>

#include "gazekit/gesture/trajectory.hpp"
#include "gazekit/phantom/image.hpp"

namespace gazekit::gesture {

constexpr std::size_t kRasterSize = 32;
constexpr std::size_t kCanvasWidth = 1920;
constexpr std::size_t kCanvasHeight = 1080;
constexpr double kStrokeWidth = 8.0;

/// 32x32 grid, row-major, values in [0, 1].
struct GestureRaster {
  std::array<double, kRasterSize * kRasterSize> cells{};

  double& operator()(std::size_t row, std::size_t col) { return cells[row * kRasterSize + col]; }
  double operator()(std::size_t row, std::size_t col) const { return cells[row * kRasterSize + col]; }

  double mean() const {
    double s = 0.0;
    for (double v : cells) s += v;
    return s / static_cast<double>(cells.size());
  }
  std::size_t nonzero_count() const {
    return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](double v) { return v > 0.0; }));
  }

  friend bool operator==(const GestureRaster&, const GestureRaster&) = default;
};

/// Normalized [0,1]^2 point to canvas pixels (x across the 1920 columns).
inline Vec2 to_canvas(const Vec2& p) {
  return {p.x() * static_cast<double>(kCanvasWidth), p.y() * static_cast<double>(kCanvasHeight)};
}

namespace detail {

inline double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 d = b - a;
  const double len2 = d.squaredNorm();
  const double t = len2 > 0.0 ? std::clamp((p - a).dot(d) / len2, 0.0, 1.0) : 0.0;
  return (p - (a + t * d)).norm();
}

// Intersection of the horizontal line y with the set of points within r of
// segment ab. That set is convex, so the result is one interval (or empty).
inline std::optional<std::pair<double, double>> capsule_row_interval(const Vec2& a, const Vec2& b, double r,
                                                                     double y) {
  double lo = INFINITY, hi = -INFINITY;
  auto disc = [&](const Vec2& c) {
    const double dy = y - c.y();
    if (dy * dy > r * r) return;
    const double h = std::sqrt(r * r - dy * dy);
    lo = std::min(lo, c.x() - h);
    hi = std::max(hi, c.x() + h);
  };
  disc(a);
  disc(b);
  const Vec2 d = b - a;
  const double len = d.norm();
  if (len > 0.0) {
    // Slab: 0 <= (P - a).u <= len and |(P - a).n| <= r with u = d/len, n = (-u.y, u.x).
    const Vec2 u = d / len, n(-u.y(), u.x());
    double s_lo = -INFINITY, s_hi = INFINITY;
    auto clip = [&](double coef, double offset, double vmin, double vmax) {
      // vmin <= coef * x + offset <= vmax
      if (coef == 0.0) {
        if (offset < vmin || offset > vmax) s_lo = INFINITY;
        return;
      }
      double x0 = (vmin - offset) / coef, x1 = (vmax - offset) / coef;
      if (x0 > x1) std::swap(x0, x1);
      s_lo = std::max(s_lo, x0);
      s_hi = std::min(s_hi, x1);
    };
    clip(u.x(), u.y() * (y - a.y()) - u.x() * a.x(), 0.0, len);
    clip(n.x(), n.y() * (y - a.y()) - n.x() * a.x(), -r, r);
    if (s_lo <= s_hi) {
      lo = std::min(lo, s_lo);
      hi = std::max(hi, s_hi);
    }
  }
  if (lo > hi) return std::nullopt;
  return std::make_pair(lo, hi);
}

inline std::vector<Vec2> canvas_polyline(const std::vector<Vec2>& pts) {
  std::vector<Vec2> c;
  c.reserve(pts.size());
  for (const auto& p : pts) c.push_back(to_canvas(p));
  return c;
}

}  // namespace detail

/// Full-resolution stroke image: a pixel is on (1) when its centre lies within
/// half the stroke width of the polyline. Reference implementation.
inline phantom::Image render_canvas(const std::vector<Vec2>& pts) {
  require(!pts.empty(), ErrorKind::DegenerateGesture, "nothing to draw");
  const auto c = detail::canvas_polyline(pts);
  const double r = kStrokeWidth / 2;
  phantom::Image img(kCanvasWidth, kCanvasHeight);
  for (std::size_t s = 0; s + 1 < std::max<std::size_t>(c.size(), 2); ++s) {
    const Vec2 a = c[s], b = c[std::min(s + 1, c.size() - 1)];
    const auto x0 = static_cast<std::size_t>(std::clamp(std::floor(std::min(a.x(), b.x()) - r), 0.0, double(kCanvasWidth)));
    const auto x1 = static_cast<std::size_t>(std::clamp(std::ceil(std::max(a.x(), b.x()) + r), 0.0, double(kCanvasWidth)));
    const auto y0 = static_cast<std::size_t>(std::clamp(std::floor(std::min(a.y(), b.y()) - r), 0.0, double(kCanvasHeight)));
    const auto y1 = static_cast<std::size_t>(std::clamp(std::ceil(std::max(a.y(), b.y()) + r), 0.0, double(kCanvasHeight)));
    for (std::size_t y = y0; y < y1; ++y)
      for (std::size_t x = x0; x < x1; ++x)
        if (detail::point_segment_distance(Vec2(double(x) + 0.5, double(y) + 0.5), a, b) <= r) img(x, y) = 1.0;
  }
  return img;
}

inline GestureRaster raster_from_image(const phantom::Image& small) {
  require(small.width == kRasterSize && small.height == kRasterSize, ErrorKind::Dimension, "raster must be 32x32");
  GestureRaster r;
  std::copy(small.pixels.begin(), small.pixels.end(), r.cells.begin());
  return r;
}

/// Rasterizes normalized points: stroke on the 1920x1080 canvas, then exact
/// area averaging to 32x32. Works row by row on stroke intervals rather than
/// pixel by pixel; the result equals area_resample(render_canvas(pts)).
inline GestureRaster rasterize(const std::vector<Vec2>& pts) {
  require(!pts.empty(), ErrorKind::DegenerateGesture, "nothing to draw");
  const auto c = detail::canvas_polyline(pts);
  const double r = kStrokeWidth / 2;
  const std::size_t nseg = std::max<std::size_t>(c.size(), 2) - 1;

  // Per canvas row: intervals of pixel columns that are on.
  std::vector<std::vector<std::pair<std::ptrdiff_t, std::ptrdiff_t>>> rows(kCanvasHeight);
  for (std::size_t s = 0; s < nseg; ++s) {
    const Vec2 a = c[s], b = c[std::min(s + 1, c.size() - 1)];
    const double ylo = std::min(a.y(), b.y()) - r, yhi = std::max(a.y(), b.y()) + r;
    const auto y0 = static_cast<std::ptrdiff_t>(std::max(0.0, std::floor(ylo - 0.5)));
    const auto y1 = std::min(static_cast<std::ptrdiff_t>(kCanvasHeight) - 1, static_cast<std::ptrdiff_t>(std::ceil(yhi)));
    for (std::ptrdiff_t y = y0; y <= y1; ++y) {
      const auto iv = detail::capsule_row_interval(a, b, r, static_cast<double>(y) + 0.5);
      if (!iv) continue;
      // Pixel centre x + 0.5 inside [lo, hi].
      const auto cx0 = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(std::ceil(iv->first - 0.5)));
      const auto cx1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(kCanvasWidth) - 1,
                                                static_cast<std::ptrdiff_t>(std::floor(iv->second - 0.5)));
      if (cx0 <= cx1) rows[static_cast<std::size_t>(y)].emplace_back(cx0, cx1);
    }
  }

  const auto wy = phantom::detail::area_weights(kCanvasHeight, kRasterSize);
  // Inverse lookup: which output rows each canvas row feeds, with weight.
  std::vector<std::vector<std::pair<std::size_t, double>>> feeds(kCanvasHeight);
  for (std::size_t i = 0; i < kRasterSize; ++i)
    for (std::size_t k = 0; k < wy.weights[i].size(); ++k)
      if (wy.weights[i][k] > 0.0) feeds[wy.first[i] + k].emplace_back(i, wy.weights[i][k]);

  constexpr std::size_t kCellWidth = kCanvasWidth / kRasterSize;
  GestureRaster out;
  std::array<double, kRasterSize> counts{};
  for (std::size_t y = 0; y < kCanvasHeight; ++y) {
    auto& iv = rows[y];
    if (iv.empty()) continue;
    std::sort(iv.begin(), iv.end());
    counts.fill(0.0);
    std::ptrdiff_t cur_lo = iv[0].first, cur_hi = iv[0].second;
    auto flush = [&](std::ptrdiff_t lo, std::ptrdiff_t hi) {
      for (auto x = lo; x <= hi;) {
        const auto cell = static_cast<std::size_t>(x) / kCellWidth;
        const auto end = std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>((cell + 1) * kCellWidth) - 1);
        counts[cell] += static_cast<double>(end - x + 1);
        x = end + 1;
      }
    };
    for (std::size_t k = 1; k < iv.size(); ++k) {
      if (iv[k].first <= cur_hi + 1) {
        cur_hi = std::max(cur_hi, iv[k].second);
      } else {
        flush(cur_lo, cur_hi);
        cur_lo = iv[k].first;
        cur_hi = iv[k].second;
      }
    }
    flush(cur_lo, cur_hi);
    for (const auto& [row, w] : feeds[y])
      for (std::size_t col = 0; col < kRasterSize; ++col)
        out(row, col) += w * counts[col] / static_cast<double>(kCellWidth);
  }
  for (double& v : out.cells) v = std::clamp(v, 0.0, 1.0);
  return out;
}

inline GestureRaster rasterize(const GazeTrajectory& t) { return rasterize(normalize_trajectory(t)); }

}  // namespace gazekit::gesture
