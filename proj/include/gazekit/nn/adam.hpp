#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "gazekit/error.hpp"
#include "gazekit/nn/layers.hpp"

namespace gazekit::nn {

struct TrainingConfig {
  double learning_rate = 1e-4;
  double lr_decay_factor = 0.1;
  int decay_every_epochs = 5;
  int epochs = 15;
  int batch_size = 256;
  std::uint64_t seed = 0;

  void validate() const {
    require(learning_rate > 0.0, ErrorKind::Configuration, "learning_rate must be > 0");
    require(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0, ErrorKind::Configuration,
            "lr_decay_factor must be in (0, 1]");
    require(decay_every_epochs >= 1, ErrorKind::Configuration, "decay_every_epochs must be >= 1");
    require(epochs >= 1, ErrorKind::Configuration, "epochs must be >= 1");
    require(batch_size >= 1, ErrorKind::Configuration, "batch_size must be >= 1");
  }
};

/// Step-decayed rate for a 1-based epoch: lr * decay^floor((epoch - 1) / every).
inline double learning_rate_for_epoch(const TrainingConfig& cfg, int epoch) {
  require(epoch >= 1, ErrorKind::Parameter, "epochs are 1-based");
  return cfg.learning_rate * std::pow(cfg.lr_decay_factor, (epoch - 1) / cfg.decay_every_epochs);
}

/// Adam with bias-corrected moments; beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
class Adam {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  /// Applies one update with the given rate. step_count is 1-based.
  void step(std::span<Parameter* const> params, double lr) {
    if (first_.size() != params.size()) {
      first_.clear();
      second_.clear();
      for (const Parameter* p : params) {
        first_.emplace_back(p->value.shape());
        second_.emplace_back(p->value.shape());
      }
      step_count_ = 0;
    }
    for (const Parameter* p : params)
      require(p->grad.all_finite(), ErrorKind::Training, "non-finite gradient in " + p->name);
    ++step_count_;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step_count_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step_count_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Parameter& p = *params[i];
      Tensor& m = first_[i];
      Tensor& v = second_[i];
      for (std::size_t j = 0; j < p.value.size(); ++j) {
        const double g = p.grad[j];
        m[j] = kBeta1 * m[j] + (1.0 - kBeta1) * g;
        v[j] = kBeta2 * v[j] + (1.0 - kBeta2) * g * g;
        p.value[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + kEpsilon);
      }
    }
  }

  std::uint64_t step_count() const { return step_count_; }
  const std::vector<Tensor>& first_moments() const { return first_; }
  const std::vector<Tensor>& second_moments() const { return second_; }

 private:
  std::vector<Tensor> first_;
  std::vector<Tensor> second_;
  std::uint64_t step_count_ = 0;
};

inline void zero_grads(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->zero_grad();
}

}  // namespace gazekit::nn
