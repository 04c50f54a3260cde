#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "gazekit/phantom/render.hpp"

namespace gazekit::phantom {

using geometry::YawPitch;

/// Yaw/pitch box in degrees.
struct GazeRange {
  double yaw_min = -25.0;
  double yaw_max = 25.0;
  double pitch_min = -25.0;
  double pitch_max = 25.0;

  void validate() const {
    require(yaw_min <= yaw_max && pitch_min <= pitch_max, ErrorKind::Parameter, "empty gaze range");
    for (double v : {yaw_min, yaw_max, pitch_min, pitch_max})
      require(v >= -40.0 && v <= 40.0, ErrorKind::Parameter, "gaze range bounds must lie within +-40 degrees");
  }
};

/// Uniform draws over a yaw x pitch box; the sequence is fixed by the seed.
class GazeSampler {
 public:
  GazeSampler(const GazeRange& range, std::uint64_t seed) : range_(range), rng_(seed) { range_.validate(); }

  YawPitch next_angles() {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double yaw = range_.yaw_min + (range_.yaw_max - range_.yaw_min) * u(rng_);
    const double pitch = range_.pitch_min + (range_.pitch_max - range_.pitch_min) * u(rng_);
    return {geometry::deg2rad(yaw), geometry::deg2rad(pitch)};
  }

  GazeDirection next() { return geometry::yaw_pitch_to_vector(next_angles()); }

 private:
  GazeRange range_;
  std::mt19937_64 rng_;
};

inline GazeDirection sample_gaze(const GazeRange& range, std::uint64_t seed) { return GazeSampler(range, seed).next(); }

/// Mixes a base seed with an index into an independent 64-bit stream seed (splitmix64).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Planar target perpendicular to the camera axis, `distance_mm` in front of the
/// eye along the straight-into-camera direction and centred on that axis.
/// Board coordinates: x toward camera +x, y toward camera +y, mm from the centre.
struct TargetBoard {
  double distance_mm = 550.0;
  double width_mm = 300.0;
  double height_mm = 200.0;
  std::vector<Vec2> markers;

  void validate() const {
    require(distance_mm > 0.0 && width_mm > 0.0 && height_mm > 0.0, ErrorKind::Parameter, "bad board geometry");
    for (const auto& m : markers)
      require(std::abs(m.x()) <= width_mm / 2 && std::abs(m.y()) <= height_mm / 2, ErrorKind::Parameter,
              "marker outside board extent");
  }
};

/// Where the gaze ray from the eyeball centre meets the board plane.
inline Vec2 board_intersection(const GazeDirection& g, const TargetBoard& board) {
  require(g.z() > 1e-12, ErrorKind::Geometry, "gaze ray is parallel to (or points away from) the board");
  return board.distance_mm * Vec2(g.x() / g.z(), g.y() / g.z());
}

/// Angles that hit the given board point.
inline YawPitch angles_for_board_point(const Vec2& point, const TargetBoard& board) {
  return {std::atan2(point.x(), board.distance_mm), std::atan2(point.y(), board.distance_mm)};
}

/// Top-left, top-right, bottom-left, bottom-right corner angles.
inline std::array<YawPitch, 4> board_corner_angles(const TargetBoard& board) {
  const double hx = board.width_mm / 2, hy = board.height_mm / 2;
  return {angles_for_board_point({-hx, hy}, board), angles_for_board_point({hx, hy}, board),
          angles_for_board_point({-hx, -hy}, board), angles_for_board_point({hx, -hy}, board)};
}

/// Angles hitting the centres of an m (columns) x n (rows) grid of board cells,
/// row-major from the top-left cell.
inline std::vector<YawPitch> board_grid_angles(const TargetBoard& board, std::size_t cols, std::size_t rows) {
  require(cols >= 1 && rows >= 1, ErrorKind::Parameter, "grid needs at least one cell");
  std::vector<YawPitch> out;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const double x = -board.width_mm / 2 + board.width_mm * (static_cast<double>(c) + 0.5) / static_cast<double>(cols);
      const double y = board.height_mm / 2 - board.height_mm * (static_cast<double>(r) + 0.5) / static_cast<double>(rows);
      out.push_back(angles_for_board_point({x, y}, board));
    }
  return out;
}

struct BoardObservation {
  YawPitch angles;
  Vec2 board_point;  // ground truth laser hit
  EyeSample sample;
};

/// Simulated laser session: for each commanded angle, the ground-truth board
/// hit paired with a rendered eye image for the estimator under test.
inline std::vector<BoardObservation> board_session(const std::vector<YawPitch>& angles, const TargetBoard& board,
                                                   const PhantomConfig& cfg, std::uint64_t seed) {
  board.validate();
  std::vector<BoardObservation> out;
  out.reserve(angles.size());
  for (std::size_t i = 0; i < angles.size(); ++i) {
    const GazeDirection g = geometry::yaw_pitch_to_vector(angles[i]);
    out.push_back({angles[i], board_intersection(g, board), generate_sample(g, cfg, derive_seed(seed, i))});
  }
  return out;
}

}  // namespace gazekit::phantom
