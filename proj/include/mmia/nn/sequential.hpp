#pragma once

#include <memory>
#include <vector>

#include "mmia/nn/layers.hpp"

namespace mmia::nn {

/// Ordered stack of layers with value semantics (copies are deep).
template <class T>
class Sequential {
 public:
  Sequential() = default;
  Sequential(const Sequential& other) {
    layers_.reserve(other.layers_.size());
    for (const auto& l : other.layers_) layers_.push_back(l->clone());
  }
  Sequential& operator=(const Sequential& other) {
    if (this != &other) {
      Sequential copy(other);
      layers_ = std::move(copy.layers_);
    }
    return *this;
  }
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  template <class L, class... Args>
  L& emplace(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    if (!layers_.empty()) {
      require_shape(layers_.back()->output_width() == layer->input_width(),
                    "Sequential: " + layer->name() + " input width does not match previous layer output");
    }
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  Matrix<T> forward(const Matrix<T>& x, Phase phase) { return forward_range(x, phase, 0, layers_.size()); }

  /// Runs layers [begin, end).
  Matrix<T> forward_range(const Matrix<T>& x, Phase phase, std::size_t begin, std::size_t end) {
    Matrix<T> h = x;
    for (std::size_t i = begin; i < end; ++i) h = layers_[i]->forward(h, phase);
    return h;
  }

  Matrix<T> infer(const Matrix<T>& x) const { return infer_range(x, 0, layers_.size()); }

  Matrix<T> infer_range(const Matrix<T>& x, std::size_t begin, std::size_t end) const {
    Matrix<T> h = x;
    for (std::size_t i = begin; i < end; ++i) h = layers_[i]->infer(h);
    return h;
  }

  Matrix<T> backward(const Matrix<T>& g) { return backward_range(g, 0, layers_.size()); }

  Matrix<T> backward_range(const Matrix<T>& g, std::size_t begin, std::size_t end) {
    Matrix<T> h = g;
    for (std::size_t i = end; i > begin; --i) h = layers_[i - 1]->backward(h);
    return h;
  }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out;
    for (auto& l : layers_) {
      for (auto* p : l->params()) out.push_back(p);
    }
    return out;
  }

  void zero_grad() {
    for (auto* p : params()) p->grad.setZero();
  }

  std::size_t size() const noexcept { return layers_.size(); }
  bool empty() const noexcept { return layers_.empty(); }
  Layer<T>& layer(std::size_t i) { return *layers_[i]; }
  const Layer<T>& layer(std::size_t i) const { return *layers_[i]; }
  std::size_t input_width() const { return layers_.empty() ? 0 : layers_.front()->input_width(); }
  std::size_t output_width() const { return layers_.empty() ? 0 : layers_.back()->output_width(); }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto* p : params()) n += static_cast<std::size_t>(p->value.size());
    return n;
  }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

}  // namespace mmia::nn
