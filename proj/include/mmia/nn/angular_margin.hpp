#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "mmia/nn/layers.hpp"

namespace mmia::nn {

struct AngularMarginConfig {
  int margin = 4;  // integer angular multiplier; 1 means normalized-weight softmax
  double lambda_base = 1000.0;
  double lambda_gamma = 0.12;
  double lambda_power = 1.0;
  double lambda_min = 5.0;

  /// Annealed blend factor between the plain and margin target logit.
  double lambda_at(long iteration) const {
    return std::max(lambda_min, lambda_base * std::pow(1.0 + lambda_gamma * static_cast<double>(iteration), -lambda_power));
  }
};

/// Multiplicative angular margin classifier head over embeddings.
///
/// Non-target logits are |x| cos(theta_j) with unit-norm class weights. The
/// target logit is |x| (lambda cos(theta) + psi(theta)) / (1 + lambda) with
/// psi(theta) = (-1)^k cos(m theta) - 2k for theta in [k pi/m, (k+1) pi/m].
template <class T>
class AngularMarginHead {
 public:
  AngularMarginHead() = default;
  AngularMarginHead(std::size_t embedding, std::size_t classes, int margin, Rng& rng)
      : margin_(margin),
        weight_("weight", detail::uniform_init<T>(static_cast<Eigen::Index>(classes),
                                                  static_cast<Eigen::Index>(embedding), 1.0, rng)) {
    require(margin >= 1, "angular margin must be >= 1");
  }

  /// Logits for a batch; caches what backward() needs.
  Matrix<T> forward(const Matrix<T>& x, const std::vector<int>& targets, double lambda) {
    require_shape(x.cols() == weight_.value.cols(), "angular head: embedding width mismatch");
    require_shape(static_cast<std::size_t>(x.rows()) == targets.size(), "angular head: batch size mismatch");
    targets_ = targets;
    const auto n = x.rows();
    const auto k = weight_.value.rows();
    x_norm_ = x.rowwise().norm().cwiseMax(T(1e-12));
    x_hat_ = x.array().colwise() / x_norm_.array();
    w_norm_ = weight_.value.rowwise().norm().cwiseMax(T(1e-12));
    w_hat_ = weight_.value.array().colwise() / w_norm_.array();
    cos_ = x_hat_ * w_hat_.transpose();
    value_ = cos_;
    slope_ = Matrix<T>::Ones(n, k);
    const T lam = static_cast<T>(lambda);
    for (Eigen::Index r = 0; r < n; ++r) {
      const int t = targets[static_cast<std::size_t>(r)];
      require(t >= 0 && t < k, "angular head: target out of range");
      const auto [psi, dpsi] = psi_and_slope(cos_(r, t));
      value_(r, t) = (lam * cos_(r, t) + psi) / (T(1) + lam);
      slope_(r, t) = (lam + dpsi) / (T(1) + lam);
    }
    return value_.array().colwise() * x_norm_.array();
  }

  /// Accumulates the weight gradient and returns d loss / d x.
  Matrix<T> backward(const Matrix<T>& grad_logits) {
    const Matrix<T> h = grad_logits.cwiseProduct(slope_);
    // d f_j / d x = g x_hat + g' (w_hat_j - c x_hat)
    const Eigen::Matrix<T, Eigen::Dynamic, 1> coeff =
        (grad_logits.cwiseProduct(value_) - h.cwiseProduct(cos_)).rowwise().sum();
    Matrix<T> dx = x_hat_.array().colwise() * coeff.array();
    dx.noalias() += h * w_hat_;
    // d f_j / d w_j = |x| g' (x_hat - c w_hat_j) / |w_j|
    const Matrix<T> hx = h.array().colwise() * x_norm_.array();
    Matrix<T> dw = hx.transpose() * x_hat_;
    const Eigen::Matrix<T, Eigen::Dynamic, 1> shrink = hx.cwiseProduct(cos_).colwise().sum().transpose();
    dw -= (w_hat_.array().colwise() * shrink.array()).matrix();
    weight_.grad += (dw.array().colwise() / w_norm_.array()).matrix();
    return dx;
  }

  /// Adds one class row (used when a new identity is enrolled).
  void add_class(Rng& rng) {
    Matrix<T> w(weight_.value.rows() + 1, weight_.value.cols());
    w.topRows(weight_.value.rows()) = weight_.value;
    w.bottomRows(1) = detail::uniform_init<T>(1, weight_.value.cols(), 1.0, rng);
    weight_ = Param<T>("weight", std::move(w));
  }

  std::vector<Param<T>*> params() { return {&weight_}; }
  int margin() const noexcept { return margin_; }
  std::size_t classes() const noexcept { return static_cast<std::size_t>(weight_.value.rows()); }

  /// psi(c) and d psi / d c for c = cos(theta).
  std::pair<T, T> psi_and_slope(T c) const {
    c = std::clamp(c, T(-1), T(1));
    const double theta = std::acos(static_cast<double>(c));
    int k = static_cast<int>(std::floor(margin_ * theta / 3.14159265358979323846));
    k = std::clamp(k, 0, margin_ - 1);
    // Chebyshev recurrence: T_m(c) = cos(m theta) and its derivative.
    T t_prev = 1, t_cur = c, d_prev = 0, d_cur = 1;
    for (int i = 1; i < margin_; ++i) {
      const T t_next = T(2) * c * t_cur - t_prev;
      const T d_next = T(2) * t_cur + T(2) * c * d_cur - d_prev;
      t_prev = t_cur;
      t_cur = t_next;
      d_prev = d_cur;
      d_cur = d_next;
    }
    const T sign = (k % 2 == 0) ? T(1) : T(-1);
    return {sign * t_cur - T(2 * k), sign * d_cur};
  }

 private:
  int margin_ = 1;
  Param<T> weight_;
  std::vector<int> targets_;
  Eigen::Matrix<T, Eigen::Dynamic, 1> x_norm_, w_norm_;
  Matrix<T> x_hat_, w_hat_, cos_, value_, slope_;
};

}  // namespace mmia::nn
