#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "gazekit/error.hpp"
#include "gazekit/nn/gemm.hpp"
#include "gazekit/nn/tensor.hpp"

namespace gazekit::nn {

enum class Mode { Train, Infer };

enum class LayerKind : std::uint32_t {
  Conv3x3 = 1,
  BatchNorm = 2,
  Relu = 3,
  FullyConnected = 4,
  ResidualBlock = 5,
  Softmax = 6,
};

inline std::string_view to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Conv3x3: return "conv3x3";
    case LayerKind::BatchNorm: return "batch_norm";
    case LayerKind::Relu: return "relu";
    case LayerKind::FullyConnected: return "fully_connected";
    case LayerKind::ResidualBlock: return "residual_block";
    case LayerKind::Softmax: return "softmax";
  }
  return "unknown";
}

/// Declarative description of one layer in a network spec.
struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  std::size_t kernel_count = 0;  // conv3x3
  std::size_t stride = 1;        // conv3x3
  std::size_t unit_count = 0;    // residual_block
  std::size_t output_dim = 0;    // fully_connected

  void validate() const {
    if (kind == LayerKind::Conv3x3) {
      require(kernel_count >= 1, ErrorKind::Configuration, "conv3x3 needs kernel_count >= 1");
      require(stride == 1 || stride == 2, ErrorKind::Configuration, "conv3x3 stride must be 1 or 2");
    }
    if (kind == LayerKind::ResidualBlock)
      require(unit_count == 1 || unit_count == 2, ErrorKind::Configuration,
              "residual unit_count must be 1 or 2");
    if (kind == LayerKind::FullyConnected)
      require(output_dim >= 1, ErrorKind::Configuration, "fully_connected needs output_dim >= 1");
  }
};

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
  void zero_grad() { grad.fill(0.0); }
};

/// Persistent tensors of one parametric layer, in serialization order.
struct LayerState {
  LayerKind kind;
  std::vector<Tensor*> tensors;
};

// He-uniform: U(-sqrt(6/fan_in), sqrt(6/fan_in)).
inline void he_uniform(Tensor& t, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t.storage()) v = dist(rng);
}

inline std::size_t conv_out_size(std::size_t in, std::size_t stride) { return (in + stride - 1) / stride; }

namespace detail {

// Unfolds one [C,H,W] image into [C*9, Ho*Wo] with zero padding 1.
inline void im2col(const double* x, std::size_t c, std::size_t h, std::size_t w, std::size_t stride,
                   double* col) {
  const std::size_t ho = conv_out_size(h, stride), wo = conv_out_size(w, stride);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* plane = x + ch * h * w;
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        double* row = col + ((ch * 3 + ky) * 3 + kx) * ho * wo;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - 1;
          double* dst = row + oy * wo;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(dst, dst + wo, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * w;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - 1;
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

inline void col2im(const double* col, std::size_t c, std::size_t h, std::size_t w, std::size_t stride,
                   double* x) {
  const std::size_t ho = conv_out_size(h, stride), wo = conv_out_size(w, stride);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double* plane = x + ch * h * w;
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        const double* row = col + ((ch * 3 + ky) * 3 + kx) * ho * wo;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - 1;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          double* dst = plane + static_cast<std::size_t>(iy) * w;
          const double* src = row + oy * wo;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - 1;
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

inline void require_forward(bool has_input, const std::string& layer) {
  require(has_input, ErrorKind::State, layer + ": backward called before forward");
}

}  // namespace detail

/// Single-image 3x3 cross-correlation with zero "same" padding.
/// input [C,H,W], kernels [K,C,3,3], bias [K] -> [K,Ho,Wo].
inline Tensor conv3x3(const Tensor& input, const Tensor& kernels, const Tensor& bias,
                      std::size_t stride = 1) {
  require(input.rank() == 3 && kernels.rank() == 4 && bias.rank() == 1, ErrorKind::Dimension,
          "conv3x3 expects input [C,H,W], kernels [K,C,3,3], bias [K]");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2), k = kernels.dim(0);
  require(kernels.dim(1) == c, ErrorKind::Dimension,
          "conv3x3: input has " + std::to_string(c) + " channels, kernels expect " +
              std::to_string(kernels.dim(1)));
  require(kernels.dim(2) == 3 && kernels.dim(3) == 3 && bias.dim(0) == k, ErrorKind::Dimension,
          "conv3x3: kernel or bias shape mismatch");
  require(h >= 3 && w >= 3, ErrorKind::Dimension, "conv3x3 needs H, W >= 3");
  const std::size_t ho = conv_out_size(h, stride), wo = conv_out_size(w, stride);
  std::vector<double> col(c * 9 * ho * wo);
  detail::im2col(input.data(), c, h, w, stride, col.data());
  Tensor out({k, ho, wo});
  gemm(Trans::No, Trans::No, k, ho * wo, c * 9, kernels.data(), c * 9, col.data(), ho * wo, 0.0,
       out.data(), ho * wo);
  for (std::size_t kk = 0; kk < k; ++kk)
    for (std::size_t i = 0; i < ho * wo; ++i) out[kk * ho * wo + i] += bias[kk];
  return out;
}

class Conv3x3 {
 public:
  Conv3x3() = default;
  Conv3x3(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t stride = 1)
      : weight(name + ".weight", Tensor({out_channels, in_channels, 3, 3})),
        bias(name + ".bias", Tensor({out_channels})),
        name_(std::move(name)),
        stride_(stride) {
    LayerSpec{LayerKind::Conv3x3, out_channels, stride}.validate();
  }

  void init(std::mt19937_64& rng) {
    he_uniform(weight.value, in_channels() * 9, rng);
    bias.value.fill(0.0);
  }

  std::size_t in_channels() const { return weight.value.dim(1); }
  std::size_t out_channels() const { return weight.value.dim(0); }
  std::size_t stride() const { return stride_; }

  /// x [N,C,H,W] -> [N,K,Ho,Wo]
  Tensor forward(const Tensor& x) {
    check_input(x);
    input_ = x;
    has_input_ = true;
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t k = out_channels(), ho = conv_out_size(h, stride_), wo = conv_out_size(w, stride_);
    Tensor y({n, k, ho, wo});
    col_.resize(c * 9 * ho * wo);
    for (std::size_t s = 0; s < n; ++s) {
      detail::im2col(x.data() + s * c * h * w, c, h, w, stride_, col_.data());
      double* ys = y.data() + s * k * ho * wo;
      gemm(Trans::No, Trans::No, k, ho * wo, c * 9, weight.value.data(), c * 9, col_.data(), ho * wo,
           0.0, ys, ho * wo);
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double b = bias.value[kk];
        for (std::size_t i = 0; i < ho * wo; ++i) ys[kk * ho * wo + i] += b;
      }
    }
    return y;
  }

  Tensor backward(const Tensor& dy) {
    detail::require_forward(has_input_, name_);
    const Tensor& x = input_;
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t k = out_channels(), ho = conv_out_size(h, stride_), wo = conv_out_size(w, stride_);
    require(dy.shape() == Shape({n, k, ho, wo}), ErrorKind::Dimension, name_ + ": bad upstream gradient");
    Tensor dx(x.shape());
    col_.resize(c * 9 * ho * wo);
    dcol_.resize(c * 9 * ho * wo);
    for (std::size_t s = 0; s < n; ++s) {
      const double* dys = dy.data() + s * k * ho * wo;
      detail::im2col(x.data() + s * c * h * w, c, h, w, stride_, col_.data());
      gemm(Trans::No, Trans::Yes, k, c * 9, ho * wo, dys, ho * wo, col_.data(), ho * wo, 1.0,
           weight.grad.data(), c * 9);
      for (std::size_t kk = 0; kk < k; ++kk) {
        double acc = 0.0;
        for (std::size_t i = 0; i < ho * wo; ++i) acc += dys[kk * ho * wo + i];
        bias.grad[kk] += acc;
      }
      gemm(Trans::Yes, Trans::No, c * 9, ho * wo, k, weight.value.data(), c * 9, dys, ho * wo, 0.0,
           dcol_.data(), ho * wo);
      detail::col2im(dcol_.data(), c, h, w, stride_, dx.data() + s * c * h * w);
    }
    return dx;
  }

  std::vector<Parameter*> parameters() { return {&weight, &bias}; }
  void collect_state(std::vector<LayerState>& out) {
    out.push_back({LayerKind::Conv3x3, {&weight.value, &bias.value}});
  }

  Parameter weight;
  Parameter bias;

 private:
  void check_input(const Tensor& x) const {
    require(x.rank() == 4, ErrorKind::Dimension, name_ + ": expects [N,C,H,W], got " + shape_string(x.shape()));
    require(x.dim(1) == in_channels(), ErrorKind::Dimension,
            name_ + ": input has " + std::to_string(x.dim(1)) + " channels, kernels expect " +
                std::to_string(in_channels()));
    require(x.dim(2) >= 1 && x.dim(3) >= 1, ErrorKind::Dimension, name_ + ": empty feature map");
  }

  std::string name_;
  std::size_t stride_ = 1;
  Tensor input_;
  bool has_input_ = false;
  std::vector<double> col_, dcol_;
};

/// Batch normalization over N (and spatial dims for rank-4 input).
class BatchNorm {
 public:
  static constexpr double kEpsilon = 1e-5;
  static constexpr double kMomentum = 0.9;

  BatchNorm() = default;
  BatchNorm(std::string name, std::size_t channels)
      : gamma(name + ".gamma", Tensor({channels}, 1.0)),
        beta(name + ".beta", Tensor({channels}, 0.0)),
        running_mean({channels}, 0.0),
        running_var({channels}, 1.0),
        name_(std::move(name)) {}

  std::size_t channels() const { return gamma.value.dim(0); }

  Tensor forward(const Tensor& x, Mode mode) {
    const auto [n, c, inner] = layout(x);
    if (mode == Mode::Train)
      require(n >= 2, ErrorKind::Configuration, name_ + ": batch norm needs N >= 2 in train mode");
    mode_ = mode;
    const double count = static_cast<double>(n * inner);
    Tensor y(x.shape());
    xhat_ = Tensor(x.shape());
    inv_std_.assign(c, 0.0);
    for (std::size_t ch = 0; ch < c; ++ch) {
      double mean, var;
      if (mode == Mode::Train) {
        double sum = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
          const double* p = x.data() + (s * c + ch) * inner;
          for (std::size_t i = 0; i < inner; ++i) sum += p[i];
        }
        mean = sum / count;
        double sq = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
          const double* p = x.data() + (s * c + ch) * inner;
          for (std::size_t i = 0; i < inner; ++i) sq += (p[i] - mean) * (p[i] - mean);
        }
        var = sq / count;
        running_mean[ch] = kMomentum * running_mean[ch] + (1.0 - kMomentum) * mean;
        running_var[ch] = kMomentum * running_var[ch] + (1.0 - kMomentum) * var;
      } else {
        mean = running_mean[ch];
        var = running_var[ch];
      }
      const double inv = 1.0 / std::sqrt(var + kEpsilon);
      inv_std_[ch] = inv;
      const double g = gamma.value[ch], b = beta.value[ch];
      for (std::size_t s = 0; s < n; ++s) {
        const std::size_t off = (s * c + ch) * inner;
        for (std::size_t i = 0; i < inner; ++i) {
          const double xh = (x[off + i] - mean) * inv;
          xhat_[off + i] = xh;
          y[off + i] = g * xh + b;
        }
      }
    }
    has_input_ = true;
    return y;
  }

  Tensor backward(const Tensor& dy) {
    detail::require_forward(has_input_, name_);
    dy.check_same_shape(xhat_, name_.c_str());
    const auto [n, c, inner] = layout(dy);
    const double count = static_cast<double>(n * inner);
    Tensor dx(dy.shape());
    for (std::size_t ch = 0; ch < c; ++ch) {
      double sum_dy = 0.0, sum_dy_xh = 0.0;
      for (std::size_t s = 0; s < n; ++s) {
        const std::size_t off = (s * c + ch) * inner;
        for (std::size_t i = 0; i < inner; ++i) {
          sum_dy += dy[off + i];
          sum_dy_xh += dy[off + i] * xhat_[off + i];
        }
      }
      beta.grad[ch] += sum_dy;
      gamma.grad[ch] += sum_dy_xh;
      const double scale = gamma.value[ch] * inv_std_[ch];
      for (std::size_t s = 0; s < n; ++s) {
        const std::size_t off = (s * c + ch) * inner;
        for (std::size_t i = 0; i < inner; ++i) {
          if (mode_ == Mode::Train)
            dx[off + i] = scale * (dy[off + i] - sum_dy / count - xhat_[off + i] * sum_dy_xh / count);
          else
            dx[off + i] = scale * dy[off + i];
        }
      }
    }
    return dx;
  }

  std::vector<Parameter*> parameters() { return {&gamma, &beta}; }
  void collect_state(std::vector<LayerState>& out) {
    out.push_back({LayerKind::BatchNorm, {&gamma.value, &beta.value, &running_mean, &running_var}});
  }

  Parameter gamma;
  Parameter beta;
  Tensor running_mean;
  Tensor running_var;

 private:
  struct Layout {
    std::size_t n, c, inner;
  };
  Layout layout(const Tensor& x) const {
    require((x.rank() == 4 || x.rank() == 2) && x.dim(1) == channels(), ErrorKind::Dimension,
            name_ + ": expects [N," + std::to_string(channels()) + ",...], got " + shape_string(x.shape()));
    return {x.dim(0), x.dim(1), x.rank() == 4 ? x.dim(2) * x.dim(3) : 1};
  }

  std::string name_;
  Mode mode_ = Mode::Train;
  Tensor xhat_;
  std::vector<double> inv_std_;
  bool has_input_ = false;
};

inline Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.storage()) v = v > 0.0 ? v : 0.0;
  return y;
}

class Relu {
 public:
  Tensor forward(const Tensor& x) {
    input_ = x;
    has_input_ = true;
    return relu(x);
  }
  Tensor backward(const Tensor& dy) {
    detail::require_forward(has_input_, "relu");
    dy.check_same_shape(input_, "relu backward");
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (input_[i] <= 0.0) dx[i] = 0.0;
    return dx;
  }

 private:
  Tensor input_;
  bool has_input_ = false;
};

/// y = x W^T + b with x flattened to [N, in].
class FullyConnected {
 public:
  FullyConnected() = default;
  FullyConnected(std::string name, std::size_t in_features, std::size_t out_features)
      : weight(name + ".weight", Tensor({out_features, in_features})),
        bias(name + ".bias", Tensor({out_features})),
        name_(std::move(name)) {
    LayerSpec{LayerKind::FullyConnected, 0, 1, 0, out_features}.validate();
  }

  void init(std::mt19937_64& rng) {
    he_uniform(weight.value, in_features(), rng);
    bias.value.fill(0.0);
  }

  std::size_t in_features() const { return weight.value.dim(1); }
  std::size_t out_features() const { return weight.value.dim(0); }

  Tensor forward(const Tensor& x) {
    require(x.rank() >= 2 && x.size() / x.dim(0) == in_features(), ErrorKind::Dimension,
            name_ + ": expects " + std::to_string(in_features()) + " features, got " + shape_string(x.shape()));
    input_ = flatten_batch(x);
    input_shape_ = x.shape();
    has_input_ = true;
    const std::size_t n = x.dim(0), in = in_features(), out = out_features();
    Tensor y({n, out});
    gemm(Trans::No, Trans::Yes, n, out, in, input_.data(), in, weight.value.data(), in, 0.0, y.data(), out);
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t j = 0; j < out; ++j) y[s * out + j] += bias.value[j];
    return y;
  }

  Tensor backward(const Tensor& dy) {
    detail::require_forward(has_input_, name_);
    const std::size_t n = input_.dim(0), in = in_features(), out = out_features();
    require(dy.shape() == Shape({n, out}), ErrorKind::Dimension,
            name_ + ": upstream gradient " + shape_string(dy.shape()) + " does not match batch");
    gemm(Trans::Yes, Trans::No, out, in, n, dy.data(), out, input_.data(), in, 1.0, weight.grad.data(), in);
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t j = 0; j < out; ++j) bias.grad[j] += dy[s * out + j];
    Tensor dx({n, in});
    gemm(Trans::No, Trans::No, n, in, out, dy.data(), out, weight.value.data(), in, 0.0, dx.data(), in);
    return dx.reshaped(input_shape_);
  }

  std::vector<Parameter*> parameters() { return {&weight, &bias}; }
  void collect_state(std::vector<LayerState>& out) {
    out.push_back({LayerKind::FullyConnected, {&weight.value, &bias.value}});
  }

  Parameter weight;
  Parameter bias;

 private:
  std::string name_;
  Tensor input_;
  Shape input_shape_;
  bool has_input_ = false;
};

/// Full pre-activation residual unit: x + conv(relu(bn(conv(relu(bn(x)))))).
class ResidualUnit {
 public:
  ResidualUnit() = default;
  ResidualUnit(const std::string& name, std::size_t channels)
      : bn1_(name + ".bn1", channels),
        conv1_(name + ".conv1", channels, channels),
        bn2_(name + ".bn2", channels),
        conv2_(name + ".conv2", channels, channels) {}

  void init(std::mt19937_64& rng) {
    conv1_.init(rng);
    conv2_.init(rng);
  }

  std::size_t channels() const { return conv1_.in_channels(); }

  Tensor forward(const Tensor& x, Mode mode) {
    require(x.rank() == 4 && x.dim(1) == channels(), ErrorKind::Dimension,
            "residual unit expects " + std::to_string(channels()) + " channels, got " + shape_string(x.shape()));
    Tensor branch = conv2_.forward(relu2_.forward(bn2_.forward(
        conv1_.forward(relu1_.forward(bn1_.forward(x, mode))), mode)));
    return branch += x;
  }

  Tensor backward(const Tensor& dy) {
    Tensor d = bn1_.backward(relu1_.backward(conv1_.backward(
        bn2_.backward(relu2_.backward(conv2_.backward(dy))))));
    return d += dy;
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (auto* p : bn1_.parameters()) out.push_back(p);
    for (auto* p : conv1_.parameters()) out.push_back(p);
    for (auto* p : bn2_.parameters()) out.push_back(p);
    for (auto* p : conv2_.parameters()) out.push_back(p);
    return out;
  }

  void collect_state(std::vector<LayerState>& out) {
    bn1_.collect_state(out);
    conv1_.collect_state(out);
    bn2_.collect_state(out);
    conv2_.collect_state(out);
  }

  BatchNorm& bn1() { return bn1_; }
  Conv3x3& conv1() { return conv1_; }
  BatchNorm& bn2() { return bn2_; }
  Conv3x3& conv2() { return conv2_; }

 private:
  BatchNorm bn1_;
  Relu relu1_;
  Conv3x3 conv1_;
  BatchNorm bn2_;
  Relu relu2_;
  Conv3x3 conv2_;
};

/// Channel-preserving stack of 1 or 2 pre-activation residual units.
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(const std::string& name, std::size_t channels, std::size_t unit_count) {
    LayerSpec{LayerKind::ResidualBlock, 0, 1, unit_count}.validate();
    for (std::size_t u = 0; u < unit_count; ++u)
      units_.emplace_back(name + ".unit" + std::to_string(u + 1), channels);
  }

  void init(std::mt19937_64& rng) {
    for (auto& u : units_) u.init(rng);
  }

  std::size_t unit_count() const { return units_.size(); }
  ResidualUnit& unit(std::size_t i) { return units_.at(i); }

  Tensor forward(const Tensor& x, Mode mode) {
    Tensor y = x;
    for (auto& u : units_) y = u.forward(y, mode);
    return y;
  }

  Tensor backward(const Tensor& dy) {
    Tensor d = dy;
    for (auto it = units_.rbegin(); it != units_.rend(); ++it) d = it->backward(d);
    return d;
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (auto& u : units_)
      for (auto* p : u.parameters()) out.push_back(p);
    return out;
  }

  void collect_state(std::vector<LayerState>& out) {
    for (auto& u : units_) u.collect_state(out);
  }

 private:
  std::vector<ResidualUnit> units_;
};

/// Fixed (non-trainable) moving-average smoothing along the feature axis:
/// [N, D] -> [N, D - window + 1].
class MovingAverage {
 public:
  explicit MovingAverage(std::size_t window = 3) : window_(window) {}

  std::size_t output_dim(std::size_t input_dim) const { return input_dim - window_ + 1; }

  Tensor forward(const Tensor& x) {
    require(x.rank() == 2 && x.dim(1) >= window_, ErrorKind::Dimension, "moving average needs [N, D>=window]");
    in_dim_ = x.dim(1);
    has_input_ = true;
    const std::size_t n = x.dim(0), out = output_dim(in_dim_);
    Tensor y({n, out});
    const double w = 1.0 / static_cast<double>(window_);
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t j = 0; j < out; ++j) {
        double acc = 0.0;
        for (std::size_t t = 0; t < window_; ++t) acc += x[s * in_dim_ + j + t];
        y[s * out + j] = acc * w;
      }
    return y;
  }

  Tensor backward(const Tensor& dy) {
    detail::require_forward(has_input_, "moving average");
    const std::size_t n = dy.dim(0), out = output_dim(in_dim_);
    Tensor dx({n, in_dim_});
    const double w = 1.0 / static_cast<double>(window_);
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t j = 0; j < out; ++j)
        for (std::size_t t = 0; t < window_; ++t) dx[s * in_dim_ + j + t] += dy[s * out + j] * w;
    return dx;
  }

 private:
  std::size_t window_;
  std::size_t in_dim_ = 0;
  bool has_input_ = false;
};

/// Row-wise softmax of [N, K] logits, max-shifted for stability.
inline Tensor softmax(const Tensor& logits) {
  require(logits.rank() == 2, ErrorKind::Dimension, "softmax expects [N, K]");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor p(logits.shape());
  for (std::size_t s = 0; s < n; ++s) {
    const double* row = logits.data() + s * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += (p[s * k + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < k; ++j) p[s * k + j] /= z;
  }
  return p;
}

/// Mean cross-entropy of softmax(logits) against integer labels.
class SoftmaxCrossEntropy {
 public:
  double forward(const Tensor& logits, const std::vector<std::size_t>& labels) {
    require(logits.rank() == 2 && labels.size() == logits.dim(0), ErrorKind::Dimension,
            "softmax cross-entropy: batch size mismatch");
    probs_ = softmax(logits);
    labels_ = labels;
    has_input_ = true;
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    double loss = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      require(labels[s] < k, ErrorKind::Dimension, "label out of range");
      loss -= std::log(std::max(probs_[s * k + labels[s]], 1e-300));
    }
    return loss / static_cast<double>(n);
  }

  Tensor backward() const {
    detail::require_forward(has_input_, "softmax cross-entropy");
    const std::size_t n = probs_.dim(0), k = probs_.dim(1);
    Tensor d = probs_;
    for (std::size_t s = 0; s < n; ++s) d[s * k + labels_[s]] -= 1.0;
    return d *= 1.0 / static_cast<double>(n);
  }

  const Tensor& probabilities() const { return probs_; }

 private:
  Tensor probs_;
  std::vector<std::size_t> labels_;
  bool has_input_ = false;
};

/// Mean over the batch of the L2 distance between prediction and target rows.
class EuclideanLoss {
 public:
  double forward(const Tensor& pred, const Tensor& target) {
    require(pred.rank() == 2 && pred.shape() == target.shape(), ErrorKind::Dimension,
            "euclidean loss: shape " + shape_string(pred.shape()) + " vs " + shape_string(target.shape()));
    diff_ = pred;
    for (std::size_t i = 0; i < diff_.size(); ++i) diff_[i] -= target[i];
    const std::size_t n = pred.dim(0), d = pred.dim(1);
    norms_.assign(n, 0.0);
    double total = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      double sq = 0.0;
      for (std::size_t j = 0; j < d; ++j) sq += diff_[s * d + j] * diff_[s * d + j];
      norms_[s] = std::sqrt(sq);
      total += norms_[s];
    }
    has_input_ = true;
    return total / static_cast<double>(n);
  }

  // The distance is not differentiable at zero; the subgradient 0 is used there.
  Tensor backward() const {
    detail::require_forward(has_input_, "euclidean loss");
    const std::size_t n = diff_.dim(0), d = diff_.dim(1);
    Tensor g(diff_.shape());
    for (std::size_t s = 0; s < n; ++s) {
      if (norms_[s] == 0.0) continue;
      const double scale = 1.0 / (static_cast<double>(n) * norms_[s]);
      for (std::size_t j = 0; j < d; ++j) g[s * d + j] = diff_[s * d + j] * scale;
    }
    return g;
  }

 private:
  Tensor diff_;
  std::vector<double> norms_;
  bool has_input_ = false;
};

inline double euclidean_loss(const Tensor& pred, const Tensor& target) {
  return EuclideanLoss{}.forward(pred, target);
}

}  // namespace gazekit::nn
