#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "gazekit/geometry/eye_model.hpp"
#include "gazekit/models/uegazenet.hpp"
#include "gazekit/nn/adam.hpp"
#include "gazekit/phantom/render.hpp"

namespace gazekit::models {

using geometry::GazeDirection;
using geometry::Vec2;
using geometry::YawPitch;

/// Images at network resolution with landmark and angle labels.
/// Landmarks are stored normalized to the rendering frame: (x/W - 0.5, y/H - 0.5),
/// ordered corners, eyelid, iris, as interleaved x, y pairs.
struct GazeDataset {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t render_width = 0;
  std::size_t render_height = 0;
  std::vector<double> pixels;     // count * height * width
  std::vector<double> landmarks;  // count * 110
  std::vector<double> angles;     // count * 2 (yaw, pitch) radians

  static constexpr std::size_t kLandmarkValues = 2 * geometry::kLandmarkCount;

  std::size_t size() const { return angles.size() / 2; }

  void add(const phantom::EyeSample& s) {
    require(s.image.width == render_width && s.image.height == render_height, ErrorKind::Dimension,
            "sample rendered at " + std::to_string(s.image.width) + "x" + std::to_string(s.image.height) +
                ", dataset expects " + std::to_string(render_width) + "x" + std::to_string(render_height));
    const phantom::Image small = (width == render_width && height == render_height)
                                     ? s.image
                                     : phantom::area_resample(s.image, width, height);
    pixels.insert(pixels.end(), small.pixels.begin(), small.pixels.end());
    for (const auto& p : s.landmarks.points) {
      landmarks.push_back(p.x() / static_cast<double>(render_width) - 0.5);
      landmarks.push_back(p.y() / static_cast<double>(render_height) - 0.5);
    }
    const YawPitch a = s.gaze.yaw_pitch();
    angles.push_back(a.yaw);
    angles.push_back(a.pitch);
  }

  /// Network input batch [B,1,H,W], centred around zero.
  nn::Tensor images(std::span<const std::size_t> idx) const {
    const std::size_t hw = width * height;
    nn::Tensor t({idx.size(), 1, height, width});
    for (std::size_t b = 0; b < idx.size(); ++b)
      for (std::size_t i = 0; i < hw; ++i) t[b * hw + i] = pixels[idx[b] * hw + i] - 0.5;
    return t;
  }

  /// Rows of [B, count] taken from landmark values [first, first + count).
  nn::Tensor landmark_targets(std::span<const std::size_t> idx, std::size_t first, std::size_t count) const {
    nn::Tensor t({idx.size(), count});
    for (std::size_t b = 0; b < idx.size(); ++b)
      for (std::size_t j = 0; j < count; ++j) t[b * count + j] = landmarks[idx[b] * kLandmarkValues + first + j];
    return t;
  }

  nn::Tensor eyelid_targets(std::span<const std::size_t> idx) const {
    return landmark_targets(idx, 0, UEGazeNetSpec::kEyelidOutputs);
  }
  nn::Tensor iris_targets(std::span<const std::size_t> idx) const {
    return landmark_targets(idx, UEGazeNetSpec::kEyelidOutputs, UEGazeNetSpec::kIrisOutputs);
  }

  nn::Tensor angle_targets(std::span<const std::size_t> idx) const {
    nn::Tensor t({idx.size(), 2});
    for (std::size_t b = 0; b < idx.size(); ++b) {
      t[2 * b] = angles[2 * idx[b]];
      t[2 * b + 1] = angles[2 * idx[b] + 1];
    }
    return t;
  }

  GazeDirection gaze(std::size_t i) const { return geometry::yaw_pitch_to_vector({angles[2 * i], angles[2 * i + 1]}); }
};

inline GazeDataset make_gaze_dataset(const std::vector<phantom::EyeSample>& samples, std::size_t width,
                                     std::size_t height, const phantom::PhantomConfig& render_cfg) {
  GazeDataset d;
  d.width = width;
  d.height = height;
  d.render_width = render_cfg.width;
  d.render_height = render_cfg.height;
  for (const auto& s : samples) d.add(s);
  return d;
}

struct EpochRecord {
  int epoch;
  double learning_rate;
  double loss;  // mean batch loss over the epoch
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch loop shared by all trainers. `batch_step` runs forward + backward
/// on the given indices and returns the batch loss; gradients are zeroed before
/// and Adam is applied after. Batches smaller than 2 are skipped because batch
/// norm needs at least two samples.
inline std::vector<EpochRecord> run_training(std::span<Parameter* const> params, std::size_t sample_count,
                                             const nn::TrainingConfig& cfg,
                                             const std::function<double(std::span<const std::size_t>)>& batch_step,
                                             const EpochCallback& on_epoch = {}) {
  cfg.validate();
  require(sample_count >= 2, ErrorKind::Configuration, "training needs at least 2 samples");
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(sample_count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  nn::Adam adam;
  std::vector<EpochRecord> log;
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = nn::learning_rate_for_epoch(cfg, epoch);
    double total = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < sample_count; start += bs) {
      const std::size_t n = std::min(bs, sample_count - start);
      if (n < 2) continue;
      nn::zero_grads(params);
      const double loss = batch_step(std::span<const std::size_t>(order.data() + start, n));
      require(std::isfinite(loss), ErrorKind::Training, "non-finite loss in epoch " + std::to_string(epoch));
      adam.step(params, lr);
      total += loss * static_cast<double>(n);
      seen += n;
    }
    require(seen > 0, ErrorKind::Configuration, "no batch of at least 2 samples");
    log.push_back({epoch, lr, total / static_cast<double>(seen)});
    if (on_epoch) on_epoch(log.back());
  }
  return log;
}

inline std::vector<EpochRecord> train_uegazenet(UEGazeNet& net, const GazeDataset& data,
                                                const nn::TrainingConfig& cfg, const EpochCallback& on_epoch = {}) {
  auto params = net.parameters();
  nn::EuclideanLoss loss_a, loss_b;
  return run_training(
      params, data.size(), cfg,
      [&](std::span<const std::size_t> idx) {
        const auto out = net.forward(data.images(idx), Mode::Train);
        const double l = loss_a.forward(out.eyelid, data.eyelid_targets(idx)) +
                         loss_b.forward(out.iris, data.iris_targets(idx));
        net.backward(loss_a.backward(), loss_b.backward());
        return l;
      },
      on_epoch);
}

inline std::vector<EpochRecord> train_uegazenet_star(UEGazeNetStar& net, const GazeDataset& data,
                                                     const nn::TrainingConfig& cfg,
                                                     const EpochCallback& on_epoch = {}) {
  auto params = net.parameters();
  nn::EuclideanLoss loss;
  return run_training(
      params, data.size(), cfg,
      [&](std::span<const std::size_t> idx) {
        const double l = loss.forward(net.forward(data.images(idx), Mode::Train), data.angle_targets(idx));
        net.backward(loss.backward());
        return l;
      },
      on_epoch);
}

/// Converts one row of network output back to landmark pixel positions.
inline geometry::EyeLandmarks decode_landmarks(const nn::Tensor& eyelid, const nn::Tensor& iris, std::size_t row,
                                               const phantom::PhantomConfig& cfg) {
  geometry::EyeLandmarks lm;
  const double w = static_cast<double>(cfg.width), h = static_cast<double>(cfg.height);
  const std::size_t na = UEGazeNetSpec::kEyelidOutputs / 2;
  for (std::size_t i = 0; i < geometry::kLandmarkCount; ++i) {
    const nn::Tensor& t = i < na ? eyelid : iris;
    const std::size_t j = i < na ? i : i - na;
    const std::size_t cols = t.dim(1);
    lm.points[i] = Vec2((t[row * cols + 2 * j] + 0.5) * w, (t[row * cols + 2 * j + 1] + 0.5) * h);
  }
  return lm;
}

/// Gaze from predicted landmarks by model inversion. Inversion failures come
/// back as nullopt so batch evaluation can count them.
struct LandmarkPrediction {
  geometry::EyeLandmarks landmarks;
  std::optional<GazeDirection> gaze;
};

inline std::vector<LandmarkPrediction> predict_via_landmarks(UEGazeNet& net, const GazeDataset& data,
                                                             std::span<const std::size_t> idx,
                                                             const phantom::PhantomConfig& cfg,
                                                             std::size_t chunk = 64) {
  std::vector<LandmarkPrediction> out;
  for (std::size_t start = 0; start < idx.size(); start += chunk) {
    const auto part = idx.subspan(start, std::min(chunk, idx.size() - start));
    const auto y = net.forward(data.images(part), Mode::Infer);
    for (std::size_t r = 0; r < part.size(); ++r) {
      LandmarkPrediction p;
      p.landmarks = decode_landmarks(y.eyelid, y.iris, r, cfg);
      try {
        p.gaze = geometry::landmarks_to_gaze(p.landmarks, cfg);
      } catch (const Error&) {
        p.gaze.reset();
      }
      out.push_back(p);
    }
  }
  return out;
}

inline std::vector<GazeDirection> predict_direct(UEGazeNetStar& net, const GazeDataset& data,
                                                 std::span<const std::size_t> idx, std::size_t chunk = 64) {
  std::vector<GazeDirection> out;
  for (std::size_t start = 0; start < idx.size(); start += chunk) {
    const auto part = idx.subspan(start, std::min(chunk, idx.size() - start));
    const nn::Tensor y = net.forward(data.images(part), Mode::Infer);
    for (std::size_t r = 0; r < part.size(); ++r) {
      // Clamp keeps wild untrained outputs inside the tangent parameterization.
      const double yaw = std::clamp(y[2 * r], -1.4, 1.4), pitch = std::clamp(y[2 * r + 1], -1.4, 1.4);
      out.push_back(geometry::yaw_pitch_to_vector({yaw, pitch}));
    }
  }
  return out;
}

/// Constant predictor: the mean training (yaw, pitch).
inline GazeDirection mean_gaze(const GazeDataset& data, std::span<const std::size_t> idx) {
  require(!idx.empty(), ErrorKind::Parameter, "mean of an empty set");
  double yaw = 0.0, pitch = 0.0;
  for (std::size_t i : idx) {
    yaw += data.angles[2 * i];
    pitch += data.angles[2 * i + 1];
  }
  const auto n = static_cast<double>(idx.size());
  return geometry::yaw_pitch_to_vector({yaw / n, pitch / n});
}

inline double median(std::vector<double> v) {
  require(!v.empty(), ErrorKind::Parameter, "median of an empty set");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  if (v.size() % 2 == 1) return v[mid];
  const double hi = v[mid];
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

inline std::vector<std::size_t> index_range(std::size_t first, std::size_t last) {
  std::vector<std::size_t> v(last - first);
  std::iota(v.begin(), v.end(), first);
  return v;
}

}  // namespace gazekit::models
