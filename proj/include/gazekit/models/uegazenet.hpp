#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gazekit/nn/layers.hpp"

namespace gazekit::models {

using nn::Mode;
using nn::Parameter;
using nn::Tensor;

/// Four outer conv stages; each stage's output feeds, in parallel, a 3x3 conv
/// and a residual block whose outputs are summed into the next stage.
/// The last stage's conv and residual outputs both go to the dense layers.
///
///   x -> outer1 -> u1 -+-> conv -+
///                      +-> res  -+-(+)-> outer2 -> u2 ... -> u4 -+-> conv -> p
///                                                                +-> res  -> r
///
/// Outer convs after the first use stride 2; residual branches keep channels.
struct BackboneSpec {
  std::array<std::size_t, 4> kernels{32, 64, 128, 256};
  std::size_t residual_units = 2;
  std::size_t input_width = 256;
  std::size_t input_height = 192;

  void validate() const {
    for (std::size_t k : kernels) require(k >= 1, ErrorKind::Configuration, "kernel counts must be >= 1");
    require(residual_units == 1 || residual_units == 2, ErrorKind::Configuration, "residual units must be 1 or 2");
    require(input_width >= 12 && input_height >= 8, ErrorKind::Configuration, "input must be at least 12x8");
  }

  std::pair<std::size_t, std::size_t> output_hw() const {
    std::size_t h = input_height, w = input_width;
    for (std::size_t i = 1; i < kernels.size(); ++i) {
      h = nn::conv_out_size(h, 2);
      w = nn::conv_out_size(w, 2);
    }
    return {h, w};
  }

  /// Length of flatten(p) ++ flatten(r).
  std::size_t feature_count() const {
    const auto [h, w] = output_hw();
    return 2 * kernels.back() * h * w;
  }

  std::vector<nn::LayerSpec> layer_specs() const {
    std::vector<nn::LayerSpec> out;
    for (std::size_t i = 0; i < kernels.size(); ++i) {
      out.push_back({nn::LayerKind::Conv3x3, kernels[i], i == 0 ? 1u : 2u});
      out.push_back({nn::LayerKind::Conv3x3, kernels[i], 1});
      out.push_back({nn::LayerKind::ResidualBlock, 0, 1, residual_units});
    }
    return out;
  }
};

class ParallelPathBackbone {
 public:
  ParallelPathBackbone() = default;
  explicit ParallelPathBackbone(const BackboneSpec& spec) : spec_(spec) {
    spec.validate();
    for (const auto& ls : spec.layer_specs()) ls.validate();
    std::size_t in = 1;
    for (std::size_t i = 0; i < spec.kernels.size(); ++i) {
      const std::string name = "stage" + std::to_string(i + 1);
      outer_.emplace_back(name + ".outer", in, spec.kernels[i], i == 0 ? 1 : 2);
      path_.emplace_back(name + ".conv", spec.kernels[i], spec.kernels[i], 1);
      res_.emplace_back(name + ".res", spec.kernels[i], spec.residual_units);
      in = spec.kernels[i];
    }
  }

  const BackboneSpec& spec() const { return spec_; }

  void init(std::mt19937_64& rng) {
    for (std::size_t i = 0; i < outer_.size(); ++i) {
      outer_[i].init(rng);
      path_[i].init(rng);
      res_[i].init(rng);
    }
  }

  /// x [N,1,H,W] -> (conv path, residual path) of the last stage.
  std::pair<Tensor, Tensor> forward(const Tensor& x, Mode mode) {
    require(x.rank() == 4 && x.dim(1) == 1 && x.dim(2) == spec_.input_height && x.dim(3) == spec_.input_width,
            ErrorKind::Dimension,
            "backbone expects [N,1," + std::to_string(spec_.input_height) + "," + std::to_string(spec_.input_width) +
                "], got " + nn::shape_string(x.shape()));
    Tensor a = x;
    for (std::size_t i = 0;; ++i) {
      Tensor u = outer_[i].forward(a);
      Tensor p = path_[i].forward(u);
      Tensor r = res_[i].forward(u, mode);
      if (i + 1 == outer_.size()) return {std::move(p), std::move(r)};
      a = std::move(p);
      a += r;
    }
  }

  /// Gradients of the last stage's two outputs -> gradient wrt the input image.
  Tensor backward(const Tensor& dp, const Tensor& dr) {
    Tensor dpath = dp, dres = dr;
    for (std::size_t i = outer_.size(); i-- > 0;) {
      Tensor du = path_[i].backward(dpath);
      du += res_[i].backward(dres);
      Tensor da = outer_[i].backward(du);
      if (i == 0) return da;
      dpath = da;
      dres = std::move(da);
    }
    return {};
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (std::size_t i = 0; i < outer_.size(); ++i) {
      for (auto* p : outer_[i].parameters()) out.push_back(p);
      for (auto* p : path_[i].parameters()) out.push_back(p);
      for (auto* p : res_[i].parameters()) out.push_back(p);
    }
    return out;
  }

  void collect_state(std::vector<nn::LayerState>& out) {
    for (std::size_t i = 0; i < outer_.size(); ++i) {
      outer_[i].collect_state(out);
      path_[i].collect_state(out);
      res_[i].collect_state(out);
    }
  }

  nn::Conv3x3& outer(std::size_t i) { return outer_.at(i); }
  nn::Conv3x3& path(std::size_t i) { return path_.at(i); }
  nn::ResidualBlock& residual(std::size_t i) { return res_.at(i); }
  std::size_t stage_count() const { return outer_.size(); }

 private:
  BackboneSpec spec_;
  std::vector<nn::Conv3x3> outer_;
  std::vector<nn::Conv3x3> path_;
  std::vector<nn::ResidualBlock> res_;
};

inline void zero_output_layer(nn::FullyConnected& fc) {
  fc.weight.value.fill(0.0);
  fc.bias.value.fill(0.0);
}

/// Every trainable value set to zero, batch-norm scales to one.
inline void zero_parameters(std::vector<Parameter*> params) {
  for (auto* p : params) p->value.fill(0.0);
  for (auto* p : params)
    if (p->name.ends_with(".gamma")) p->value.fill(1.0);
}

inline Tensor flat_features(const Tensor& p, const Tensor& r) {
  return nn::concat_features(nn::flatten_batch(p), nn::flatten_batch(r));
}

/// Dense head: FC -> ReLU -> FC.
class DenseHead {
 public:
  DenseHead() = default;
  DenseHead(const std::string& name, std::size_t in, std::size_t hidden, std::size_t out)
      : fc1_(name + ".fc1", in, hidden), fc2_(name + ".fc2", hidden, out) {}

  void init(std::mt19937_64& rng) {
    fc1_.init(rng);
    fc2_.init(rng);
  }
  Tensor forward(const Tensor& x) { return fc2_.forward(relu_.forward(fc1_.forward(x))); }
  Tensor backward(const Tensor& dy) { return fc1_.backward(relu_.backward(fc2_.backward(dy))); }

  std::vector<Parameter*> parameters() {
    return {&fc1_.weight, &fc1_.bias, &fc2_.weight, &fc2_.bias};
  }
  void collect_state(std::vector<nn::LayerState>& out) {
    fc1_.collect_state(out);
    fc2_.collect_state(out);
  }
  nn::FullyConnected& first() { return fc1_; }
  nn::FullyConnected& last() { return fc2_; }

 private:
  nn::FullyConnected fc1_;
  nn::Relu relu_;
  nn::FullyConnected fc2_;
};

struct UEGazeNetSpec {
  static constexpr std::size_t kEyelidOutputs = 46;  // 2 x (16 eyelid + 7 corner)
  static constexpr std::size_t kIrisOutputs = 64;    // 2 x 32 iris

  BackboneSpec backbone{{32, 64, 128, 256}, 2, 256, 192};
  std::size_t head_hidden = 128;
};

/// Landmark network: two independent dense heads read the shared backbone
/// features; head A predicts corner + eyelid points, head B the iris edge.
class UEGazeNet {
 public:
  struct Output {
    Tensor eyelid;  // [N, 46]
    Tensor iris;    // [N, 64]
  };

  UEGazeNet() = default;
  explicit UEGazeNet(const UEGazeNetSpec& spec, std::uint64_t seed = 0)
      : spec_(spec),
        backbone_(spec.backbone),
        head_a_("head_eyelid", spec.backbone.feature_count(), spec.head_hidden, UEGazeNetSpec::kEyelidOutputs),
        head_b_("head_iris", spec.backbone.feature_count(), spec.head_hidden, UEGazeNetSpec::kIrisOutputs) {
    std::mt19937_64 rng(seed);
    backbone_.init(rng);
    head_a_.init(rng);
    head_b_.init(rng);
    // Output layers start at zero so the untrained net predicts the frame centre
    // instead of the large values the unnormalized feature sums would give.
    zero_output_layer(head_a_.last());
    zero_output_layer(head_b_.last());
  }

  const UEGazeNetSpec& spec() const { return spec_; }

  Output forward(const Tensor& x, Mode mode) {
    auto [p, r] = backbone_.forward(x, mode);
    p_shape_ = p.shape();
    const Tensor f = flat_features(p, r);
    return {head_a_.forward(f), head_b_.forward(f)};
  }

  void backward(const Tensor& d_eyelid, const Tensor& d_iris) {
    Tensor df = head_a_.backward(d_eyelid);
    df += head_b_.backward(d_iris);
    const std::size_t half = df.dim(1) / 2;
    auto [dp, dr] = nn::split_features(df, half);
    backbone_.backward(dp.reshaped(p_shape_), dr.reshaped(p_shape_));
  }

  std::vector<Parameter*> parameters() {
    auto out = backbone_.parameters();
    for (auto* p : head_a_.parameters()) out.push_back(p);
    for (auto* p : head_b_.parameters()) out.push_back(p);
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto* p : parameters()) n += p->value.size();
    return n;
  }

  std::vector<nn::LayerState> state() {
    std::vector<nn::LayerState> out;
    backbone_.collect_state(out);
    head_a_.collect_state(out);
    head_b_.collect_state(out);
    return out;
  }

  ParallelPathBackbone& backbone() { return backbone_; }
  DenseHead& eyelid_head() { return head_a_; }
  DenseHead& iris_head() { return head_b_; }

 private:
  UEGazeNetSpec spec_;
  ParallelPathBackbone backbone_;
  DenseHead head_a_;
  DenseHead head_b_;
  nn::Shape p_shape_;
};

struct UEGazeNetStarSpec {
  BackboneSpec backbone{{24, 24, 48, 48}, 1, 256, 192};
  std::size_t fc1 = 64;
  std::size_t fc2 = 32;
  std::size_t filter_window = 3;
};

/// Direct regression network: FC1 -> ReLU -> FC2 -> ReLU; both activations are
/// concatenated, smoothed by a fixed moving-average filter, and regressed to
/// (yaw, pitch).
class UEGazeNetStar {
 public:
  UEGazeNetStar() = default;
  explicit UEGazeNetStar(const UEGazeNetStarSpec& spec, std::uint64_t seed = 0)
      : spec_(spec),
        backbone_(spec.backbone),
        fc1_("fc1", spec.backbone.feature_count(), spec.fc1),
        fc2_("fc2", spec.fc1, spec.fc2),
        filter_(spec.filter_window),
        out_("regress", filter_.output_dim(spec.fc1 + spec.fc2), 2) {
    std::mt19937_64 rng(seed);
    backbone_.init(rng);
    fc1_.init(rng);
    fc2_.init(rng);
    out_.init(rng);
    zero_output_layer(out_);
  }

  const UEGazeNetStarSpec& spec() const { return spec_; }

  /// [N,1,H,W] -> [N,2] (yaw, pitch) in radians.
  Tensor forward(const Tensor& x, Mode mode) {
    auto [p, r] = backbone_.forward(x, mode);
    p_shape_ = p.shape();
    const Tensor h1 = relu1_.forward(fc1_.forward(flat_features(p, r)));
    const Tensor h2 = relu2_.forward(fc2_.forward(h1));
    return out_.forward(filter_.forward(nn::concat_features(h1, h2)));
  }

  void backward(const Tensor& dy) {
    const Tensor dcat = filter_.backward(out_.backward(dy));
    auto [dh1, dh2] = nn::split_features(dcat, spec_.fc1);
    dh1 += fc2_.backward(relu2_.backward(dh2));
    const Tensor df = fc1_.backward(relu1_.backward(dh1));
    auto [dp, dr] = nn::split_features(df, df.dim(1) / 2);
    backbone_.backward(dp.reshaped(p_shape_), dr.reshaped(p_shape_));
  }

  std::vector<Parameter*> parameters() {
    auto out = backbone_.parameters();
    for (auto* p : {&fc1_.weight, &fc1_.bias, &fc2_.weight, &fc2_.bias, &out_.weight, &out_.bias}) out.push_back(p);
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto* p : parameters()) n += p->value.size();
    return n;
  }

  std::vector<nn::LayerState> state() {
    std::vector<nn::LayerState> out;
    backbone_.collect_state(out);
    fc1_.collect_state(out);
    fc2_.collect_state(out);
    out_.collect_state(out);
    return out;
  }

  ParallelPathBackbone& backbone() { return backbone_; }

 private:
  UEGazeNetStarSpec spec_;
  ParallelPathBackbone backbone_;
  nn::FullyConnected fc1_;
  nn::Relu relu1_;
  nn::FullyConnected fc2_;
  nn::Relu relu2_;
  nn::MovingAverage filter_;
  nn::FullyConnected out_;
  nn::Shape p_shape_;
};

inline UEGazeNet build_uegazenet(const UEGazeNetSpec& spec, std::uint64_t seed = 0) { return UEGazeNet(spec, seed); }
inline UEGazeNetStar build_uegazenet_star(const UEGazeNetStarSpec& spec, std::uint64_t seed = 0) {
  return UEGazeNetStar(spec, seed);
}

}  // namespace gazekit::models
