#pragma once

#include <cmath>
#include <random>

#include "gazekit/phantom/render.hpp"

namespace gazekit::phantom {

/// Pupil-centred zoom, shift, clockwise rotation, then Gaussian blur.
struct AugmentationParams {
  double zoom = 1.0;          // n in [1, 3]
  double shift_x = 0.0;       // w, keeps the pupil inside the image
  double shift_y = 0.0;       // h
  double rotation_deg = 0.0;  // alpha in [-30, 30], clockwise on screen
  double blur_sigma = 0.0;    // px

  bool is_identity() const {
    return zoom == 1.0 && shift_x == 0.0 && shift_y == 0.0 && rotation_deg == 0.0 && blur_sigma == 0.0;
  }

  void validate(const Vec2& pupil, std::size_t width, std::size_t height) const {
    require(zoom >= 1.0 && zoom <= 3.0, ErrorKind::Parameter, "zoom must be in [1, 3]");
    require(rotation_deg >= -30.0 && rotation_deg <= 30.0, ErrorKind::Parameter,
            "rotation must be in [-30, 30] degrees");
    require(blur_sigma >= 0.0, ErrorKind::Parameter, "blur sigma must be >= 0");
    const double nx = pupil.x() + shift_x, ny = pupil.y() + shift_y;
    require(nx >= 0.0 && nx <= static_cast<double>(width) && ny >= 0.0 && ny <= static_cast<double>(height),
            ErrorKind::Parameter, "shift moves the pupil outside the image");
  }
};

/// Similarity transform applied to image points: pupil + shift + zoom * R(p - pupil).
struct PupilTransform {
  Vec2 pupil;
  Vec2 shift;
  double zoom;
  double cos_a, sin_a;

  PupilTransform(const Vec2& pupil_, const AugmentationParams& p)
      : pupil(pupil_),
        shift(p.shift_x, p.shift_y),
        zoom(p.zoom),
        cos_a(std::cos(geometry::deg2rad(p.rotation_deg))),
        sin_a(std::sin(geometry::deg2rad(p.rotation_deg))) {}

  // Image y points down, so this matrix turns clockwise on screen.
  Vec2 apply(const Vec2& q) const {
    const Vec2 d = q - pupil;
    return pupil + shift + zoom * Vec2(cos_a * d.x() - sin_a * d.y(), sin_a * d.x() + cos_a * d.y());
  }

  Vec2 inverse(const Vec2& q) const {
    const Vec2 d = (q - pupil - shift) / zoom;
    return pupil + Vec2(cos_a * d.x() + sin_a * d.y(), -sin_a * d.x() + cos_a * d.y());
  }
};

/// Rotates a gaze vector about the camera z axis to follow an image rotated
/// clockwise by alpha degrees.
inline GazeDirection rotate_gaze_with_image(const GazeDirection& g, double alpha_deg) {
  const double c = std::cos(geometry::deg2rad(alpha_deg)), s = std::sin(geometry::deg2rad(alpha_deg));
  return GazeDirection::from_vector(Vec3(c * g.x() + s * g.y(), -s * g.x() + c * g.y(), g.z()));
}

inline EyeSample augment(const EyeSample& sample, const AugmentationParams& params) {
  params.validate(sample.pupil, sample.image.width, sample.image.height);
  if (params.is_identity()) return sample;

  const PupilTransform t(sample.pupil, params);
  EyeSample out;
  out.image = Image(sample.image.width, sample.image.height);
  for (std::size_t y = 0; y < out.image.height; ++y)
    for (std::size_t x = 0; x < out.image.width; ++x) {
      const Vec2 src = t.inverse(Vec2(static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5));
      out.image(x, y) = bilinear(sample.image, src.x(), src.y());
    }
  out.image = gaussian_blur(out.image, params.blur_sigma);
  for (std::size_t i = 0; i < geometry::kLandmarkCount; ++i) out.landmarks[i] = t.apply(sample.landmarks[i]);
  out.pupil = t.apply(sample.pupil);
  out.gaze = params.rotation_deg == 0.0 ? sample.gaze : rotate_gaze_with_image(sample.gaze, params.rotation_deg);
  return out;
}

/// Draws parameters over the full documented ranges for a given sample.
inline AugmentationParams random_augmentation(const EyeSample& sample, std::mt19937_64& rng,
                                              double max_blur_sigma = 2.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  AugmentationParams p;
  p.zoom = 1.0 + 2.0 * u(rng);
  const double w = static_cast<double>(sample.image.width), h = static_cast<double>(sample.image.height);
  p.shift_x = -sample.pupil.x() + w * u(rng);
  p.shift_y = -sample.pupil.y() + h * u(rng);
  p.rotation_deg = -30.0 + 60.0 * u(rng);
  p.blur_sigma = max_blur_sigma * u(rng);
  return p;
}

}  // namespace gazekit::phantom
