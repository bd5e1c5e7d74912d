#pragma once

#include <cmath>
#include <vector>

#include "mmia/nn/layers.hpp"

namespace mmia::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive-moment optimizer bound to a fixed parameter list.
template <class T>
class Adam {
 public:
  Adam(std::vector<Param<T>*> params, AdamConfig config) : params_(std::move(params)), config_(config) {
    for (auto* p : params_) {
      m_.push_back(Matrix<T>::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix<T>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, t_);
    const double c2 = 1.0 - std::pow(config_.beta2, t_);
    const T lr = static_cast<T>(config_.learning_rate * std::sqrt(c2) / c1);
    const T b1 = static_cast<T>(config_.beta1), b2 = static_cast<T>(config_.beta2);
    const T eps = static_cast<T>(config_.epsilon * std::sqrt(c2));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = *params_[i];
      m_[i] = b1 * m_[i] + (T(1) - b1) * p.grad;
      v_[i] = b2 * v_[i] + (T(1) - b2) * p.grad.cwiseAbs2();
      p.value.array() -= lr * m_[i].array() / (v_[i].array().sqrt() + eps);
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->grad.setZero();
  }

  long steps() const noexcept { return t_; }

 private:
  std::vector<Param<T>*> params_;
  AdamConfig config_;
  std::vector<Matrix<T>> m_, v_;
  long t_ = 0;
};

}  // namespace mmia::nn
