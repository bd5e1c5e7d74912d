#pragma once

#include <cmath>
#include <vector>

#include "mmia/core/error.hpp"
#include "mmia/nn/layers.hpp"

namespace mmia::inv {

/// Gaussian-window structural similarity on planar images with pixels in
/// [0,1]. Statistics are taken over "valid" window positions only.
struct SsimConfig {
  int window = 11;
  double sigma = 1.5;
  double c1 = 0.01 * 0.01;
  double c2 = 0.03 * 0.03;
};

template <class T>
class Ssim {
 public:
  using Plane = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Ssim(nn::SpatialShape shape, SsimConfig cfg = {}) : shape_(shape), cfg_(cfg) {
    require(cfg.window % 2 == 1 && cfg.window >= 1, "ssim window must be odd");
    require(shape.height >= cfg.window && shape.width >= cfg.window,
            "image is smaller than the ssim window");
    const int r = cfg.window / 2;
    double sum = 0;
    for (int i = -r; i <= r; ++i) {
      const double w = std::exp(-(i * i) / (2.0 * cfg.sigma * cfg.sigma));
      taps_.push_back(static_cast<T>(w));
      sum += w;
    }
    for (auto& w : taps_) w /= static_cast<T>(sum);
  }

  /// Mean SSIM over every image (row) and channel.
  T mean(const nn::Matrix<T>& x, const nn::Matrix<T>& y) const {
    check(x, y);
    T total = 0;
    for (Eigen::Index n = 0; n < x.rows(); ++n)
      for (int c = 0; c < shape_.channels; ++c) total += plane_ssim(plane(x, n, c), plane(y, n, c), nullptr);
    return total / static_cast<T>(x.rows() * shape_.channels);
  }

  /// Mean SSIM and its gradient with respect to y.
  T mean_with_grad(const nn::Matrix<T>& x, const nn::Matrix<T>& y, nn::Matrix<T>& dy) const {
    check(x, y);
    dy.resize(y.rows(), y.cols());
    const T scale = T(1) / static_cast<T>(x.rows() * shape_.channels);
    T total = 0;
    for (Eigen::Index n = 0; n < x.rows(); ++n) {
      for (int c = 0; c < shape_.channels; ++c) {
        Plane g;
        total += plane_ssim(plane(x, n, c), plane(y, n, c), &g);
        const Eigen::Index off = static_cast<Eigen::Index>(c) * shape_.height * shape_.width;
        for (int i = 0; i < shape_.height; ++i)
          for (int j = 0; j < shape_.width; ++j) dy(n, off + i * shape_.width + j) = g(i, j) * scale;
      }
    }
    return total * scale;
  }

 private:
  void check(const nn::Matrix<T>& x, const nn::Matrix<T>& y) const {
    require_shape(x.rows() == y.rows() && x.cols() == y.cols(), "ssim: image batches differ in shape");
    require_shape(static_cast<std::size_t>(x.cols()) == shape_.size(), "ssim: image width does not match shape");
  }

  Plane plane(const nn::Matrix<T>& m, Eigen::Index n, int c) const {
    Plane p(shape_.height, shape_.width);
    const T* src = m.data() + n * m.cols() + static_cast<Eigen::Index>(c) * shape_.height * shape_.width;
    std::copy(src, src + p.size(), p.data());
    return p;
  }

  /// Separable valid filtering: (H, W) -> (H - k + 1, W - k + 1).
  Plane filter(const Plane& a) const {
    const int k = cfg_.window;
    Plane rows(a.rows(), a.cols() - k + 1);
    for (Eigen::Index i = 0; i < rows.rows(); ++i)
      for (Eigen::Index j = 0; j < rows.cols(); ++j) {
        T s = 0;
        for (int t = 0; t < k; ++t) s += taps_[static_cast<std::size_t>(t)] * a(i, j + t);
        rows(i, j) = s;
      }
    Plane out(a.rows() - k + 1, rows.cols());
    for (Eigen::Index i = 0; i < out.rows(); ++i)
      for (Eigen::Index j = 0; j < out.cols(); ++j) {
        T s = 0;
        for (int t = 0; t < k; ++t) s += taps_[static_cast<std::size_t>(t)] * rows(i + t, j);
        out(i, j) = s;
      }
    return out;
  }

  /// Adjoint of filter(): scatters a valid-grid map back onto the image grid.
  Plane filter_adjoint(const Plane& g) const {
    const int k = cfg_.window;
    Plane cols = Plane::Zero(g.rows() + k - 1, g.cols());
    for (Eigen::Index i = 0; i < g.rows(); ++i)
      for (int t = 0; t < k; ++t) cols.row(i + t) += taps_[static_cast<std::size_t>(t)] * g.row(i);
    Plane out = Plane::Zero(cols.rows(), g.cols() + k - 1);
    for (Eigen::Index j = 0; j < g.cols(); ++j)
      for (int t = 0; t < k; ++t) out.col(j + t) += taps_[static_cast<std::size_t>(t)] * cols.col(j);
    return out;
  }

  T plane_ssim(const Plane& x, const Plane& y, Plane* grad) const {
    const T c1 = static_cast<T>(cfg_.c1), c2 = static_cast<T>(cfg_.c2);
    const Plane mx = filter(x), my = filter(y);
    const Plane exx = filter(x.cwiseProduct(x)), eyy = filter(y.cwiseProduct(y)), exy = filter(x.cwiseProduct(y));
    const auto n = static_cast<T>(mx.size());
    T total = 0;
    Plane g_my, g_eyy, g_exy;
    if (grad) {
      g_my.resize(mx.rows(), mx.cols());
      g_eyy.resize(mx.rows(), mx.cols());
      g_exy.resize(mx.rows(), mx.cols());
    }
    for (Eigen::Index i = 0; i < mx.rows(); ++i) {
      for (Eigen::Index j = 0; j < mx.cols(); ++j) {
        const T ux = mx(i, j), uy = my(i, j);
        const T a1 = T(2) * ux * uy + c1;
        const T b1 = ux * ux + uy * uy + c1;
        const T a2 = T(2) * (exy(i, j) - ux * uy) + c2;
        const T b2 = (exx(i, j) - ux * ux) + (eyy(i, j) - uy * uy) + c2;
        const T s = a1 * a2 / (b1 * b2);
        total += s;
        if (grad) {
          // no division by a1 or a2: the covariance term can cross zero
          const T bb = b1 * b2;
          g_my(i, j) = (T(2) * ux * (a2 - a1) / bb - T(2) * uy * s * (T(1) / b1 - T(1) / b2)) / n;
          g_eyy(i, j) = -s / b2 / n;
          g_exy(i, j) = T(2) * a1 / bb / n;
        }
      }
    }
    if (grad) {
      *grad = filter_adjoint(g_my) + T(2) * y.cwiseProduct(filter_adjoint(g_eyy)) + x.cwiseProduct(filter_adjoint(g_exy));
    }
    return total / n;
  }

  nn::SpatialShape shape_;
  SsimConfig cfg_;
  std::vector<T> taps_;
};

}  // namespace mmia::inv
