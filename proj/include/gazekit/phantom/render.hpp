#pragma once

#include <cstdint>
#include <random>

#include "gazekit/geometry/eye_model.hpp"
#include "gazekit/phantom/config.hpp"
#include "gazekit/phantom/image.hpp"

namespace gazekit::phantom {

using geometry::EyeLandmarks;
using geometry::GazeDirection;

/// One labelled eye image.
struct EyeSample {
  Image image;
  EyeLandmarks landmarks;
  GazeDirection gaze;
  Vec2 pupil = Vec2::Zero();  // image position of the iris centre
};

/// Appearance values drawn for one rendering.
struct Appearance {
  double iris_darkness;
  double sclera_brightness;
  double skin_tone;
  double noise_sigma;
};

inline Appearance draw_appearance(const PhantomConfig& cfg, std::mt19937_64& rng) {
  Appearance a;
  a.iris_darkness = cfg.iris_darkness.sample(rng);
  a.sclera_brightness = cfg.sclera_brightness.sample(rng);
  a.skin_tone = cfg.skin_tone.sample(rng);
  a.noise_sigma = cfg.noise_sigma.sample(rng);
  return a;
}

/// Flat-shaded eye: skin outside the lid aperture with a dark lash line on the
/// upper lid, bright sclera inside, and an iris with a radial gradient and a
/// dark pupil, clipped by the lids.
inline Image render_eye(const GazeDirection& gaze, const PhantomConfig& cfg, const Appearance& look,
                        std::mt19937_64& rng) {
  const auto lm = geometry::project_gaze_to_landmarks(gaze, cfg);
  const auto iris = geometry::fit_ellipse(lm.iris());
  const auto lid = geometry::lid_aperture(gaze, cfg);
  constexpr double kPupilRatio = 0.42;
  constexpr double kLashWidth = 2.5;

  Image img(cfg.width, cfg.height);
  for (std::size_t y = 0; y < cfg.height; ++y) {
    for (std::size_t x = 0; x < cfg.width; ++x) {
      const Vec2 p(static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5);
      double v = look.skin_tone;
      const auto span = lid.span_at(p.x());
      if (span && p.y() >= span->first && p.y() <= span->second) {
        const double rho = iris.radial(p);
        if (rho < kPupilRatio) {
          v = 0.04;
        } else if (rho < 1.0) {
          v = look.iris_darkness * (0.75 + 0.5 * (rho - kPupilRatio) / (1.0 - kPupilRatio));
        } else {
          const double edge = std::abs(p.x() - lid.center.x()) / lid.half_width;
          v = look.sclera_brightness * (1.0 - 0.15 * edge * edge);
        }
      } else if (span && p.y() < span->first && p.y() >= span->first - kLashWidth) {
        v = 0.12 * look.skin_tone;
      }
      img(x, y) = v;
    }
  }
  if (look.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, look.noise_sigma);
    for (double& v : img.pixels) v = std::clamp(v + noise(rng), 0.0, 1.0);
  }
  return img;
}

/// Renders a labelled sample; deterministic for a given seed.
inline EyeSample generate_sample(const GazeDirection& gaze, const PhantomConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  const Appearance look = draw_appearance(cfg, rng);
  EyeSample s;
  s.gaze = gaze;
  s.landmarks = geometry::project_gaze_to_landmarks(gaze, cfg);
  s.pupil = geometry::project_pupil(gaze, cfg);
  s.image = render_eye(gaze, cfg, look, rng);
  return s;
}

}  // namespace gazekit::phantom
