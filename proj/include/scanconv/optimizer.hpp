#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "scanconv/tensor.hpp"

namespace scanconv::ag {

struct NagConfig {
  double lr = 0.01;
  double momentum = 0.99;
  double clip_norm = 25.0;  // infinity disables clipping
};

/// Nesterov accelerated gradient in the form
///   p   <- p + m^2 * buf - (1 + m) * lr * g
///   buf <- m * buf - lr * g
/// applied after rescaling all gradients so their global L2 norm is at most
/// clip_norm. Gradients are cleared after each step.
template <typename Scalar>
class NagOptimizer {
 public:
  NagOptimizer(std::vector<Tensor<Scalar>> params, NagConfig config)
      : params_(std::move(params)), config_(config) {
    momentum_.reserve(params_.size());
    for (const auto& p : params_) momentum_.push_back(Matrix<Scalar>::Zero(p.rows(), p.cols()));
  }

  /// Returns the global gradient norm before clipping.
  double step() {
    double sq = 0.0;
    for (const auto& p : params_)
      if (p.has_grad()) sq += static_cast<double>(p.grad().squaredNorm());
    const double norm = std::sqrt(sq);
    double coef = 1.0;
    if (std::isfinite(config_.clip_norm) && norm > config_.clip_norm) coef = config_.clip_norm / norm;

    const Scalar m = Scalar(config_.momentum);
    const Scalar lr = Scalar(config_.lr);
    const Scalar c = Scalar(coef);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      auto& buf = momentum_[i];
      if (p.has_grad()) {
        const Matrix<Scalar> g = p.grad() * c;
        p.mutable_value() += m * m * buf - (Scalar(1) + m) * lr * g;
        buf = m * buf - lr * g;
      } else {
        p.mutable_value() += m * m * buf;
        buf *= m;
      }
      p.zero_grad();
    }
    ++steps_;
    return norm;
  }

  const NagConfig& config() const { return config_; }
  const std::vector<Matrix<Scalar>>& momentum_buffers() const { return momentum_; }
  std::size_t steps() const { return steps_; }

 private:
  std::vector<Tensor<Scalar>> params_;
  std::vector<Matrix<Scalar>> momentum_;
  NagConfig config_;
  std::size_t steps_ = 0;
};

}  // namespace scanconv::ag
