#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mmia/core/error.hpp"
#include "mmia/core/rng.hpp"

namespace mmia::nn {

/// Activations are batches stored one sample per row. Spatial tensors are
/// flattened channel-major (c, y, x) within a row.
template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

enum class Phase { train, infer };

template <class T>
struct Param {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;

  Param() = default;
  Param(std::string n, Matrix<T> v) : name(std::move(n)), value(std::move(v)), grad(Matrix<T>::Zero(value.rows(), value.cols())) {}
};

struct SpatialShape {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t size() const noexcept {
    return static_cast<std::size_t>(channels) * static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  }
};

template <class T>
class Layer {
 public:
  virtual ~Layer() = default;

  /// Caches whatever backward() needs.
  virtual Matrix<T> forward(const Matrix<T>& x, Phase phase) = 0;
  /// Inference-mode forward pass without caching; safe to call concurrently.
  virtual Matrix<T> infer(const Matrix<T>& x) const = 0;
  /// Accumulates parameter gradients and returns the gradient w.r.t. the input
  /// of the most recent forward().
  virtual Matrix<T> backward(const Matrix<T>& grad_out) = 0;
  virtual std::vector<Param<T>*> params() { return {}; }
  virtual std::unique_ptr<Layer> clone() const = 0;
  virtual std::size_t input_width() const = 0;
  virtual std::size_t output_width() const = 0;
  virtual std::string name() const = 0;
};

namespace detail {

template <class T>
Matrix<T> uniform_init(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  Matrix<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = static_cast<T>((2.0 * uniform01(rng) - 1.0) * bound);
  }
  return m;
}

inline void check_width(std::size_t got, std::size_t expected, const std::string& layer) {
  require_shape(got == expected, layer + ": input width " + std::to_string(got) + " != expected " +
                                     std::to_string(expected));
}

}  // namespace detail

/// Fully connected layer, y = x W^T + b.
template <class T>
class Dense final : public Layer<T> {
 public:
  Dense(std::size_t in, std::size_t out, Rng& rng, double gain = std::sqrt(2.0))
      : in_(in), out_(out),
        weight_("weight", detail::uniform_init<T>(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in),
                                                  gain * std::sqrt(3.0 / static_cast<double>(in)), rng)),
        bias_("bias", Matrix<T>::Zero(1, static_cast<Eigen::Index>(out))) {}

  Matrix<T> forward(const Matrix<T>& x, Phase) override {
    input_ = x;
    return infer(x);
  }

  Matrix<T> infer(const Matrix<T>& x) const override {
    detail::check_width(static_cast<std::size_t>(x.cols()), in_, "Dense");
    Matrix<T> y = x * weight_.value.transpose();
    y.rowwise() += bias_.value.row(0);
    return y;
  }

  /// Appends output units; new weights drawn like fresh ones (scaled by init_scale).
  void grow_outputs(std::size_t extra, Rng& rng, double init_scale = 1.0) {
    Matrix<T> w(static_cast<Eigen::Index>(out_ + extra), static_cast<Eigen::Index>(in_));
    w.topRows(static_cast<Eigen::Index>(out_)) = weight_.value;
    w.bottomRows(static_cast<Eigen::Index>(extra)) =
        detail::uniform_init<T>(static_cast<Eigen::Index>(extra), static_cast<Eigen::Index>(in_),
                                init_scale * std::sqrt(3.0 / static_cast<double>(in_)), rng);
    Matrix<T> b = Matrix<T>::Zero(1, static_cast<Eigen::Index>(out_ + extra));
    b.leftCols(static_cast<Eigen::Index>(out_)) = bias_.value;
    out_ += extra;
    weight_ = Param<T>("weight", std::move(w));
    bias_ = Param<T>("bias", std::move(b));
  }

  Matrix<T> backward(const Matrix<T>& g) override {
    weight_.grad.noalias() += g.transpose() * input_;
    bias_.grad.row(0) += g.colwise().sum();
    return g * weight_.value;
  }

  std::vector<Param<T>*> params() override { return {&weight_, &bias_}; }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Dense>(*this); }
  std::size_t input_width() const override { return in_; }
  std::size_t output_width() const override { return out_; }
  std::string name() const override { return "dense"; }

 private:
  std::size_t in_, out_;
  Param<T> weight_, bias_;
  Matrix<T> input_;
};

/// 2-D convolution (square kernel, zero padding k/2) via im2col + GEMM.
template <class T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(SpatialShape in, int out_channels, int kernel, int stride, Rng& rng, double gain = std::sqrt(2.0))
      : in_(in), kernel_(kernel), stride_(stride), pad_(kernel / 2) {
    require(kernel % 2 == 1 && stride >= 1, "Conv2d: kernel must be odd and stride positive");
    out_ = {out_channels, (in.height + 2 * pad_ - kernel) / stride + 1, (in.width + 2 * pad_ - kernel) / stride + 1};
    const auto fan_in = static_cast<double>(in.channels * kernel * kernel);
    weight_ = Param<T>("weight", detail::uniform_init<T>(out_channels, in.channels * kernel * kernel,
                                                         gain * std::sqrt(3.0 / fan_in), rng));
    bias_ = Param<T>("bias", Matrix<T>::Zero(1, out_channels));
  }

  Matrix<T> forward(const Matrix<T>& x, Phase) override {
    detail::check_width(static_cast<std::size_t>(x.cols()), in_.size(), "Conv2d");
    batch_ = x.rows();
    im2col(x, cols_);
    return apply(cols_, batch_);
  }

  Matrix<T> infer(const Matrix<T>& x) const override {
    detail::check_width(static_cast<std::size_t>(x.cols()), in_.size(), "Conv2d");
    Matrix<T> cols;
    im2col(x, cols);
    return apply(cols, x.rows());
  }

  Matrix<T> backward(const Matrix<T>& g) override {
    const Eigen::Index spatial = out_.height * out_.width;
    Matrix<T> gm(out_.channels, batch_ * spatial);
    for (Eigen::Index n = 0; n < batch_; ++n) {
      for (int co = 0; co < out_.channels; ++co) {
        const T* src = g.data() + n * g.cols() + co * spatial;
        T* dst = gm.data() + co * gm.cols() + n * spatial;
        std::copy(src, src + spatial, dst);
      }
    }
    weight_.grad.noalias() += gm * cols_.transpose();
    bias_.grad.row(0) += gm.rowwise().sum().transpose();
    Matrix<T> dcols = weight_.value.transpose() * gm;
    return col2im(dcols);
  }

  std::vector<Param<T>*> params() override { return {&weight_, &bias_}; }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Conv2d>(*this); }
  std::size_t input_width() const override { return in_.size(); }
  std::size_t output_width() const override { return out_.size(); }
  std::string name() const override { return "conv2d"; }
  SpatialShape output_shape() const { return out_; }

 private:
  Matrix<T> apply(const Matrix<T>& cols, Eigen::Index batch) const {
    const Eigen::Index spatial = out_.height * out_.width;
    Matrix<T> prod = weight_.value * cols;  // Cout x (N * spatial)
    Matrix<T> y(batch, static_cast<Eigen::Index>(out_.size()));
    for (Eigen::Index n = 0; n < batch; ++n) {
      for (int co = 0; co < out_.channels; ++co) {
        const T b = bias_.value(0, co);
        const T* src = prod.data() + co * prod.cols() + n * spatial;
        T* dst = y.data() + n * y.cols() + co * spatial;
        for (Eigen::Index j = 0; j < spatial; ++j) dst[j] = src[j] + b;
      }
    }
    return y;
  }

  void im2col(const Matrix<T>& x, Matrix<T>& cols) const {
    const Eigen::Index batch = x.rows();
    const Eigen::Index spatial = out_.height * out_.width;
    cols.resize(in_.channels * kernel_ * kernel_, batch * spatial);
    for (int c = 0; c < in_.channels; ++c) {
      for (int ky = 0; ky < kernel_; ++ky) {
        for (int kx = 0; kx < kernel_; ++kx) {
          T* row = cols.data() + ((c * kernel_ + ky) * kernel_ + kx) * cols.cols();
          for (Eigen::Index n = 0; n < batch; ++n) {
            const T* img = x.data() + n * x.cols() + c * in_.height * in_.width;
            T* dst = row + n * spatial;
            for (int oy = 0; oy < out_.height; ++oy) {
              const int iy = oy * stride_ - pad_ + ky;
              for (int ox = 0; ox < out_.width; ++ox) {
                const int ix = ox * stride_ - pad_ + kx;
                const bool inside = iy >= 0 && iy < in_.height && ix >= 0 && ix < in_.width;
                dst[oy * out_.width + ox] = inside ? img[iy * in_.width + ix] : T(0);
              }
            }
          }
        }
      }
    }
  }

  Matrix<T> col2im(const Matrix<T>& dcols) const {
    const Eigen::Index spatial = out_.height * out_.width;
    Matrix<T> dx = Matrix<T>::Zero(batch_, static_cast<Eigen::Index>(in_.size()));
    for (int c = 0; c < in_.channels; ++c) {
      for (int ky = 0; ky < kernel_; ++ky) {
        for (int kx = 0; kx < kernel_; ++kx) {
          const T* row = dcols.data() + ((c * kernel_ + ky) * kernel_ + kx) * dcols.cols();
          for (Eigen::Index n = 0; n < batch_; ++n) {
            T* img = dx.data() + n * dx.cols() + c * in_.height * in_.width;
            const T* src = row + n * spatial;
            for (int oy = 0; oy < out_.height; ++oy) {
              const int iy = oy * stride_ - pad_ + ky;
              if (iy < 0 || iy >= in_.height) continue;
              for (int ox = 0; ox < out_.width; ++ox) {
                const int ix = ox * stride_ - pad_ + kx;
                if (ix < 0 || ix >= in_.width) continue;
                img[iy * in_.width + ix] += src[oy * out_.width + ox];
              }
            }
          }
        }
      }
    }
    return dx;
  }

  SpatialShape in_, out_;
  int kernel_, stride_, pad_;
  Param<T> weight_, bias_;
  Eigen::Index batch_ = 0;
  Matrix<T> cols_;
};

/// Nearest-neighbour 2x upsampling.
template <class T>
class Upsample2x final : public Layer<T> {
 public:
  explicit Upsample2x(SpatialShape in) : in_(in) {}

  Matrix<T> forward(const Matrix<T>& x, Phase) override { return infer(x); }

  Matrix<T> infer(const Matrix<T>& x) const override {
    detail::check_width(static_cast<std::size_t>(x.cols()), in_.size(), "Upsample2x");
    const int ow = in_.width * 2, oh = in_.height * 2;
    Matrix<T> y(x.rows(), static_cast<Eigen::Index>(in_.channels) * oh * ow);
    for (Eigen::Index n = 0; n < x.rows(); ++n) {
      for (int c = 0; c < in_.channels; ++c) {
        const T* src = x.data() + n * x.cols() + c * in_.height * in_.width;
        T* dst = y.data() + n * y.cols() + c * oh * ow;
        for (int yy = 0; yy < oh; ++yy) {
          for (int xx = 0; xx < ow; ++xx) dst[yy * ow + xx] = src[(yy / 2) * in_.width + xx / 2];
        }
      }
    }
    return y;
  }

  Matrix<T> backward(const Matrix<T>& g) override {
    const int ow = in_.width * 2, oh = in_.height * 2;
    Matrix<T> dx = Matrix<T>::Zero(g.rows(), static_cast<Eigen::Index>(in_.size()));
    for (Eigen::Index n = 0; n < g.rows(); ++n) {
      for (int c = 0; c < in_.channels; ++c) {
        const T* src = g.data() + n * g.cols() + c * oh * ow;
        T* dst = dx.data() + n * dx.cols() + c * in_.height * in_.width;
        for (int yy = 0; yy < oh; ++yy) {
          for (int xx = 0; xx < ow; ++xx) dst[(yy / 2) * in_.width + xx / 2] += src[yy * ow + xx];
        }
      }
    }
    return dx;
  }

  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Upsample2x>(*this); }
  std::size_t input_width() const override { return in_.size(); }
  std::size_t output_width() const override { return in_.size() * 4; }
  std::string name() const override { return "upsample2x"; }
  SpatialShape output_shape() const { return {in_.channels, in_.height * 2, in_.width * 2}; }

 private:
  SpatialShape in_;
};

/// Leaky rectifier; slope 0 gives the plain rectifier.
template <class T>
class LeakyRelu final : public Layer<T> {
 public:
  LeakyRelu(std::size_t width, double slope = 0.0) : width_(width), slope_(static_cast<T>(slope)) {}

  Matrix<T> forward(const Matrix<T>& x, Phase) override {
    input_ = x;
    return infer(x);
  }

  Matrix<T> infer(const Matrix<T>& x) const override {
    return x.unaryExpr([s = slope_](T v) { return v > T(0) ? v : s * v; });
  }

  Matrix<T> backward(const Matrix<T>& g) override {
    return g.binaryExpr(input_, [s = slope_](T gv, T xv) { return xv > T(0) ? gv : s * gv; });
  }

  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<LeakyRelu>(*this); }
  std::size_t input_width() const override { return width_; }
  std::size_t output_width() const override { return width_; }
  std::string name() const override { return slope_ == T(0) ? "relu" : "leaky_relu"; }

 private:
  std::size_t width_;
  T slope_;
  Matrix<T> input_;
};

template <class T>
class Sigmoid final : public Layer<T> {
 public:
  explicit Sigmoid(std::size_t width) : width_(width) {}

  Matrix<T> forward(const Matrix<T>& x, Phase) override {
    output_ = infer(x);
    return output_;
  }

  Matrix<T> infer(const Matrix<T>& x) const override {
    return x.unaryExpr([](T v) { return T(1) / (T(1) + std::exp(-v)); });
  }

  Matrix<T> backward(const Matrix<T>& g) override {
    return g.binaryExpr(output_, [](T gv, T s) { return gv * s * (T(1) - s); });
  }

  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Sigmoid>(*this); }
  std::size_t input_width() const override { return width_; }
  std::size_t output_width() const override { return width_; }
  std::string name() const override { return "sigmoid"; }

 private:
  std::size_t width_;
  Matrix<T> output_;
};

/// Inverted dropout: active only in Phase::train, identity at inference.
template <class T>
class Dropout final : public Layer<T> {
 public:
  Dropout(std::size_t width, double rate, std::uint64_t seed) : width_(width), rate_(rate), rng_(seed) {
    require(rate >= 0.0 && rate < 1.0, "dropout rate must lie in [0,1)");
  }

  Matrix<T> forward(const Matrix<T>& x, Phase phase) override {
    if (phase == Phase::infer || rate_ == 0.0) {
      mask_ = Matrix<T>::Ones(x.rows(), x.cols());
      return x;
    }
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate_));
    mask_.resize(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < mask_.size(); ++i) {
      mask_.data()[i] = uniform01(rng_) < rate_ ? T(0) : keep_scale;
    }
    return x.cwiseProduct(mask_);
  }

  Matrix<T> infer(const Matrix<T>& x) const override { return x; }

  Matrix<T> backward(const Matrix<T>& g) override { return g.cwiseProduct(mask_); }

  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Dropout>(*this); }
  std::size_t input_width() const override { return width_; }
  std::size_t output_width() const override { return width_; }
  std::string name() const override { return "dropout"; }
  double rate() const noexcept { return rate_; }

 private:
  std::size_t width_;
  double rate_;
  Rng rng_;
  Matrix<T> mask_;
};

}  // namespace mmia::nn
