#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "mmia/core/error.hpp"
#include "mmia/nn/losses.hpp"

namespace mmia::inv {

inline constexpr double kProbEps = 1e-7;

template <class T>
T clamp_prob(T p) {
  return std::clamp(p, static_cast<T>(kProbEps), static_cast<T>(1.0 - kProbEps));
}

/// Gradients of the discriminator loss with respect to D's outputs.
template <class T>
struct DiscriminatorLoss {
  T loss{};
  nn::Matrix<T> grad_real, grad_fake;
};

/// -mean log D(real) - mean log(1 - D(fake)), outputs clamped to [eps, 1-eps].
template <class T>
DiscriminatorLoss<T> discriminator_loss(const nn::Matrix<T>& d_real, const nn::Matrix<T>& d_fake) {
  require_shape(d_real.cols() == 1 && d_fake.cols() == 1 && d_real.rows() > 0 && d_fake.rows() > 0,
                "discriminator outputs must be non-empty column vectors");
  std::vector<int> ones(static_cast<std::size_t>(d_real.rows()), 1), zeros(static_cast<std::size_t>(d_fake.rows()), 0);
  auto r = nn::binary_cross_entropy(d_real, ones, kProbEps);
  auto f = nn::binary_cross_entropy(d_fake, zeros, kProbEps);
  return {r.loss + f.loss, std::move(r.grad), std::move(f.grad)};
}

/// Non-saturating generator loss, -mean log D(fake).
template <class T>
nn::LossGrad<T> generator_adversarial_loss(const nn::Matrix<T>& d_fake) {
  require_shape(d_fake.cols() == 1 && d_fake.rows() > 0, "discriminator outputs must be a non-empty column vector");
  return nn::binary_cross_entropy(d_fake, std::vector<int>(static_cast<std::size_t>(d_fake.rows()), 1), kProbEps);
}

/// Mean absolute pixel error; gradient with respect to x_hat.
template <class T>
nn::LossGrad<T> l1_loss(const nn::Matrix<T>& x, const nn::Matrix<T>& x_hat) {
  require_shape(x.rows() == x_hat.rows() && x.cols() == x_hat.cols(), "l1: shape mismatch");
  const T n = static_cast<T>(x.size());
  const nn::Matrix<T> diff = x_hat - x;
  nn::LossGrad<T> out{diff.cwiseAbs().sum() / n, nn::Matrix<T>(diff.rows(), diff.cols())};
  for (Eigen::Index i = 0; i < diff.size(); ++i) {
    const T d = diff.data()[i];
    out.grad.data()[i] = (d > 0 ? T(1) : d < 0 ? T(-1) : T(0)) / n;
  }
  return out;
}

/// Mean squared difference of two feature batches; gradient with respect to the second.
template <class T>
nn::LossGrad<T> feature_mse(const nn::Matrix<T>& target, const nn::Matrix<T>& got) {
  require_shape(target.rows() == got.rows() && target.cols() == got.cols(), "perceptual: feature shape mismatch");
  const T n = static_cast<T>(got.size());
  const nn::Matrix<T> diff = got - target;
  return {diff.squaredNorm() / n, diff * (T(2) / n)};
}

/// Cross-entropy of softmax(logits) against 1-based slot indices.
template <class T>
nn::LossGrad<T> alignment_loss(const nn::Matrix<T>& logits, const std::vector<std::size_t>& true_index) {
  require_shape(static_cast<std::size_t>(logits.rows()) == true_index.size(), "alignment: batch size mismatch");
  std::vector<int> targets;
  targets.reserve(true_index.size());
  for (auto i : true_index) {
    require(i >= 1 && i <= static_cast<std::size_t>(logits.cols()),
            "alignment: slot index " + std::to_string(i) + " outside [1, " + std::to_string(logits.cols()) + "]");
    targets.push_back(static_cast<int>(i - 1));
  }
  return nn::softmax_cross_entropy(logits, targets);
}

/// Per-term generator objective. total is the unit-weight sum of the parts.
struct LossBundle {
  double l1 = 0;
  double ssim_loss = 0;
  double perceptual = 0;
  double adversarial = 0;
  std::optional<double> alignment;
  double total = 0;
};

inline LossBundle total_generator_loss(double l1, double ssim_loss, double perceptual, double adversarial,
                                       std::optional<double> alignment, bool srwal) {
  require(!srwal || alignment.has_value(), "srwal requires the alignment loss term");
  LossBundle b{l1, ssim_loss, perceptual, adversarial, srwal ? alignment : std::nullopt, 0};
  b.total = l1 + ssim_loss + perceptual + adversarial + (b.alignment ? *b.alignment : 0.0);
  return b;
}

}  // namespace mmia::inv
