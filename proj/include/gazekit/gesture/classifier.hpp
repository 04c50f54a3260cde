#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "gazekit/gesture/catalog.hpp"
#include "gazekit/gesture/raster.hpp"
#include "gazekit/models/gaze_training.hpp"
#include "gazekit/nn/weights_io.hpp"

namespace gazekit::gesture {

using nn::Tensor;

struct Classification {
  int pattern_id = 0;
  int category = 0;
  std::array<double, kPatternCount> probabilities{};
};

/// conv3x3(16) -> BN -> ReLU -> flatten -> FC(128) -> ReLU -> FC(17) -> softmax.
class GestureClassifier {
 public:
  static constexpr std::size_t kKernels = 16;
  static constexpr std::size_t kHidden = 128;

  explicit GestureClassifier(std::uint64_t seed = 0)
      : conv_("conv", 1, kKernels, 1),
        bn_("bn", kKernels),
        fc1_("fc1", kKernels * kRasterSize * kRasterSize, kHidden),
        fc2_("fc2", kHidden, kPatternCount) {
    std::mt19937_64 rng(seed);
    conv_.init(rng);
    fc1_.init(rng);
    fc2_.init(rng);
  }

  static std::vector<nn::LayerSpec> layer_specs() {
    return {{nn::LayerKind::Conv3x3, kKernels, 1},
            {nn::LayerKind::BatchNorm},
            {nn::LayerKind::Relu},
            {nn::LayerKind::FullyConnected, 0, 1, 0, kHidden},
            {nn::LayerKind::Relu},
            {nn::LayerKind::FullyConnected, 0, 1, 0, kPatternCount},
            {nn::LayerKind::Softmax}};
  }

  /// Sets every parameter to zero (BN keeps unit scale).
  void zero_init() {
    for (auto* p : parameters()) p->value.fill(0.0);
    bn_.gamma.value.fill(1.0);
  }

  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }

  /// [N,1,32,32] -> logits [N,17].
  Tensor logits(const Tensor& x, nn::Mode mode) {
    return fc2_.forward(relu2_.forward(fc1_.forward(relu1_.forward(bn_.forward(conv_.forward(x), mode)))));
  }

  void backward(const Tensor& dlogits) {
    conv_.backward(bn_.backward(relu1_.backward(fc1_.backward(relu2_.backward(fc2_.backward(dlogits))))));
  }

  /// Softmax probabilities in inference mode, without the trained check.
  Tensor forward_probabilities(const Tensor& x) { return nn::softmax(logits(x, nn::Mode::Infer)); }

  std::vector<nn::Parameter*> parameters() {
    return {&conv_.weight, &conv_.bias, &bn_.gamma, &bn_.beta, &fc1_.weight, &fc1_.bias, &fc2_.weight, &fc2_.bias};
  }

  std::vector<nn::LayerState> state() {
    std::vector<nn::LayerState> out;
    conv_.collect_state(out);
    bn_.collect_state(out);
    fc1_.collect_state(out);
    fc2_.collect_state(out);
    return out;
  }

  void save(const std::string& path) { nn::save_weights(path, state()); }
  void load(const std::string& path) {
    auto s = state();
    nn::load_weights(path, s);
    trained_ = true;
  }

  nn::Conv3x3& conv() { return conv_; }
  nn::BatchNorm& batch_norm() { return bn_; }
  nn::FullyConnected& fc1() { return fc1_; }
  nn::FullyConnected& fc2() { return fc2_; }

 private:
  nn::Conv3x3 conv_;
  nn::BatchNorm bn_;
  nn::Relu relu1_;
  nn::FullyConnected fc1_;
  nn::Relu relu2_;
  nn::FullyConnected fc2_;
  bool trained_ = false;
};

inline GestureClassifier build_gt_classifier(std::uint64_t seed = 0) { return GestureClassifier(seed); }

inline Tensor raster_batch(std::span<const GestureRaster> rasters, std::span<const std::size_t> idx) {
  constexpr std::size_t hw = kRasterSize * kRasterSize;
  Tensor t({idx.size(), 1, kRasterSize, kRasterSize});
  for (std::size_t b = 0; b < idx.size(); ++b)
    std::copy(rasters[idx[b]].cells.begin(), rasters[idx[b]].cells.end(), t.data() + b * hw);
  return t;
}

/// Labels are pattern ids 1..17.
inline std::vector<models::EpochRecord> train_gestures(GestureClassifier& net, std::span<const GestureRaster> rasters,
                                                       std::span<const int> labels, const nn::TrainingConfig& cfg,
                                                       const models::EpochCallback& on_epoch = {}) {
  require(rasters.size() == labels.size(), ErrorKind::Configuration, "raster/label count mismatch");
  for (int l : labels) require(l >= 1 && l <= kPatternCount, ErrorKind::Configuration, "label outside 1..17");
  auto params = net.parameters();
  nn::SoftmaxCrossEntropy ce;
  auto log = models::run_training(
      params, rasters.size(), cfg,
      [&](std::span<const std::size_t> idx) {
        std::vector<std::size_t> y;
        y.reserve(idx.size());
        for (std::size_t i : idx) y.push_back(static_cast<std::size_t>(labels[i] - 1));
        const double l = ce.forward(net.logits(raster_batch(rasters, idx), nn::Mode::Train), y);
        net.backward(ce.backward());
        return l;
      },
      on_epoch);
  net.mark_trained();
  return log;
}

inline std::vector<Classification> classify_batch(GestureClassifier& net, std::span<const GestureRaster> rasters,
                                                  const Catalog& catalog = default_catalog(), std::size_t chunk = 256) {
  require(net.trained(), ErrorKind::Classification, "classifier has no trained weights");
  std::vector<Classification> out;
  out.reserve(rasters.size());
  for (std::size_t start = 0; start < rasters.size(); start += chunk) {
    const auto idx = models::index_range(start, std::min(rasters.size(), start + chunk));
    const Tensor p = net.forward_probabilities(raster_batch(rasters, idx));
    for (std::size_t r = 0; r < idx.size(); ++r) {
      Classification c;
      std::size_t best = 0;
      for (std::size_t k = 0; k < kPatternCount; ++k) {
        c.probabilities[k] = p[r * kPatternCount + k];
        if (c.probabilities[k] > c.probabilities[best]) best = k;
      }
      c.pattern_id = static_cast<int>(best) + 1;
      c.category = find_pattern(catalog, c.pattern_id).category;
      out.push_back(c);
    }
  }
  return out;
}

inline Classification classify(GestureClassifier& net, const GestureRaster& r,
                               const Catalog& catalog = default_catalog()) {
  return classify_batch(net, std::span<const GestureRaster>(&r, 1), catalog).front();
}

}  // namespace gazekit::gesture
