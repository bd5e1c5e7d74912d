#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "mmia/core/error.hpp"
#include "mmia/nn/layers.hpp"

namespace mmia::nn {

template <class T>
struct LossGrad {
  T loss{};
  Matrix<T> grad;  // d loss / d input, same shape as the input
};

/// Row-wise numerically stable softmax.
template <class T>
Matrix<T> softmax(const Matrix<T>& logits) {
  Matrix<T> out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const T mx = logits.row(r).maxCoeff();
    T sum = 0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      out(r, c) = std::exp(logits(r, c) - mx);
      sum += out(r, c);
    }
    out.row(r) /= sum;
  }
  return out;
}

/// Mean softmax cross-entropy of logits against integer targets.
template <class T>
LossGrad<T> softmax_cross_entropy(const Matrix<T>& logits, const std::vector<int>& targets) {
  require_shape(static_cast<std::size_t>(logits.rows()) == targets.size(), "cross-entropy: batch size mismatch");
  Matrix<T> p = softmax(logits);
  LossGrad<T> out{T(0), p};
  const T n = static_cast<T>(logits.rows());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const int t = targets[static_cast<std::size_t>(r)];
    require(t >= 0 && t < logits.cols(), "cross-entropy: target index out of range");
    out.loss -= std::log(std::max(p(r, t), std::numeric_limits<T>::min()));
    out.grad(r, t) -= T(1);
  }
  out.loss /= n;
  out.grad /= n;
  return out;
}

/// Mean binary cross-entropy on probabilities, clamped to [eps, 1-eps].
template <class T>
LossGrad<T> binary_cross_entropy(const Matrix<T>& prob, const std::vector<int>& labels, double eps = 1e-7) {
  require_shape(static_cast<std::size_t>(prob.rows()) == labels.size() && prob.cols() == 1, "bce: shape mismatch");
  LossGrad<T> out{T(0), Matrix<T>::Zero(prob.rows(), 1)};
  const T lo = static_cast<T>(eps), hi = static_cast<T>(1.0 - eps);
  const T n = static_cast<T>(prob.rows());
  for (Eigen::Index r = 0; r < prob.rows(); ++r) {
    const T raw = prob(r, 0);
    const T p = std::clamp(raw, lo, hi);
    const bool inside = raw > lo && raw < hi;
    if (labels[static_cast<std::size_t>(r)] != 0) {
      out.loss -= std::log(p);
      if (inside) out.grad(r, 0) = -T(1) / (p * n);
    } else {
      out.loss -= std::log(T(1) - p);
      if (inside) out.grad(r, 0) = T(1) / ((T(1) - p) * n);
    }
  }
  out.loss /= n;
  return out;
}

}  // namespace mmia::nn
