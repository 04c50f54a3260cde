#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "gazekit/error.hpp"

namespace gazekit::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

/// Dense row-major array of doubles.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
    validate_shape();
    data_.assign(element_count(shape_), fill);
  }

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape();
    require(data_.size() == element_count(shape_), ErrorKind::Dimension,
            "data length " + std::to_string(data_.size()) + " does not match shape " +
                shape_string(shape_));
  }

  Tensor(std::initializer_list<std::size_t> shape, double fill = 0.0)
      : Tensor(Shape(shape), fill) {}

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
    return data_[((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }
  double at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return data_[((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }

  /// Same data viewed under a new shape with equal element count.
  Tensor reshaped(Shape shape) const {
    require(element_count(shape) == data_.size(), ErrorKind::Dimension,
            "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    return Tensor(std::move(shape), data_);
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  Tensor& operator+=(const Tensor& other) {
    check_same_shape(other, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }

  Tensor& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

  friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
  friend Tensor operator*(Tensor a, double s) { return a *= s; }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

  void check_same_shape(const Tensor& other, const char* op) const {
    require(shape_ == other.shape_, ErrorKind::Dimension,
            std::string(op) + ": shape " + shape_string(shape_) + " vs " + shape_string(other.shape_));
  }

 private:
  void validate_shape() const {
    for (std::size_t d : shape_)
      require(d > 0, ErrorKind::Dimension, "tensor dims must be positive, got " + shape_string(shape_));
  }

  Shape shape_;
  std::vector<double> data_;
};

inline Tensor random_uniform(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : t.storage()) v = dist(rng);
  return t;
}

inline Tensor random_normal(Shape shape, std::mt19937_64& rng, double mean = 0.0, double sigma = 1.0) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(mean, sigma);
  for (double& v : t.storage()) v = dist(rng);
  return t;
}

/// Flattens every dim after the first: [N, ...] -> [N, prod(...)].
inline Tensor flatten_batch(const Tensor& t) {
  require(t.rank() >= 1, ErrorKind::Dimension, "flatten needs rank >= 1");
  return t.reshaped({t.dim(0), t.size() / t.dim(0)});
}

/// Concatenates two [N, A] and [N, B] matrices into [N, A+B].
inline Tensor concat_features(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.dim(0) == b.dim(0), ErrorKind::Dimension,
          "concat needs matching [N, *] matrices, got " + shape_string(a.shape()) + " and " +
              shape_string(b.shape()));
  const std::size_t n = a.dim(0), da = a.dim(1), db = b.dim(1);
  Tensor out({n, da + db});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.data() + i * da, da, out.data() + i * (da + db));
    std::copy_n(b.data() + i * db, db, out.data() + i * (da + db) + da);
  }
  return out;
}

/// Splits [N, A+B] back into [N, A] and [N, B].
inline std::pair<Tensor, Tensor> split_features(const Tensor& t, std::size_t first) {
  require(t.rank() == 2 && first > 0 && first < t.dim(1), ErrorKind::Dimension, "bad feature split");
  const std::size_t n = t.dim(0), total = t.dim(1), second = total - first;
  Tensor a({n, first}), b({n, second});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(t.data() + i * total, first, a.data() + i * first);
    std::copy_n(t.data() + i * total + first, second, b.data() + i * second);
  }
  return {std::move(a), std::move(b)};
}

}  // namespace gazekit::nn
