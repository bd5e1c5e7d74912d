#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mmia/core/image.hpp"
#include "mmia/core/rng.hpp"
#include "mmia/nn/sequential.hpp"

namespace mmia::inv {

struct GeneratorConfig {
  std::size_t input_dim = 64;
  std::size_t alpha = 1;
  bool alignment_head = false;
  ImageShape image{32, 32, 1};
  int hidden = 256;  // input projection width
  int z = 128;       // intermediary layer feeding the alignment head
  std::vector<int> decoder_channels{64, 32, 16, 8};  // one upsampling block per entry

  friend bool operator==(const GeneratorConfig&, const GeneratorConfig&) = default;
};

/// Vector-to-image generator: input projection, intermediary layer z, and an
/// upsampling convolutional decoder ending in a sigmoid. With an alignment
/// head, z also feeds a linear map to alpha slot logits.
template <class T>
class Generator {
 public:
  Generator() = default;
  Generator(const GeneratorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    require(cfg.input_dim >= 1 && cfg.alpha >= 1, "generator needs input_dim >= 1 and alpha >= 1");
    require(!cfg.decoder_channels.empty(), "generator needs at least one decoder block");
    const int blocks = static_cast<int>(cfg.decoder_channels.size());
    const int base_h = cfg.image.height >> blocks, base_w = cfg.image.width >> blocks;
    require(base_h >= 1 && base_w >= 1 && (base_h << blocks) == cfg.image.height && (base_w << blocks) == cfg.image.width,
            "image " + to_string(cfg.image) + " is not divisible by 2^" + std::to_string(blocks));
    Rng rng(seed);
    const auto hidden = static_cast<std::size_t>(cfg.hidden), z = static_cast<std::size_t>(cfg.z);
    encoder_.template emplace<nn::Dense<T>>(cfg.input_dim, hidden, rng);
    encoder_.template emplace<nn::LeakyRelu<T>>(hidden, 0.2);
    encoder_.template emplace<nn::Dense<T>>(hidden, z, rng);
    encoder_.template emplace<nn::LeakyRelu<T>>(z, 0.2);
    if (cfg.alignment_head) align_.template emplace<nn::Dense<T>>(z, cfg.alpha, rng, 1.0);

    nn::SpatialShape s{cfg.decoder_channels.front(), base_h, base_w};
    decoder_.template emplace<nn::Dense<T>>(z, s.size(), rng);
    decoder_.template emplace<nn::LeakyRelu<T>>(s.size());
    for (int b = 0; b < blocks; ++b) {
      const int out = cfg.decoder_channels[static_cast<std::size_t>(std::min(b + 1, blocks - 1))];
      decoder_.template emplace<nn::Upsample2x<T>>(s);
      s = {s.channels, s.height * 2, s.width * 2};
      auto& conv = decoder_.template emplace<nn::Conv2d<T>>(s, out, 3, 1, rng);
      s = conv.output_shape();
      decoder_.template emplace<nn::LeakyRelu<T>>(s.size());
    }
    auto& last = decoder_.template emplace<nn::Conv2d<T>>(s, cfg.image.channels, 3, 1, rng, 1.0);
    decoder_.template emplace<nn::Sigmoid<T>>(last.output_width());
  }

  const GeneratorConfig& config() const noexcept { return cfg_; }
  bool has_alignment_head() const noexcept { return !align_.empty(); }
  T input_scale() const noexcept { return scale_; }
  void set_input_scale(T s) { scale_ = s; }

  /// Training forward pass; caches activations (and slot logits with a head).
  nn::Matrix<T> forward(const nn::Matrix<T>& in) {
    z_ = encoder_.forward(in * scale_, nn::Phase::train);
    if (has_alignment_head()) logits_ = align_.forward(z_, nn::Phase::train);
    return decoder_.forward(z_, nn::Phase::train);
  }

  const nn::Matrix<T>& logits() const noexcept { return logits_; }

  /// Backpropagates image and (optional) logit gradients into every parameter.
  void backward(const nn::Matrix<T>& grad_image, const nn::Matrix<T>* grad_logits = nullptr) {
    nn::Matrix<T> gz = decoder_.backward(grad_image);
    if (grad_logits) {
      require(has_alignment_head(), "generator has no alignment head");
      gz += align_.backward(*grad_logits);
    }
    encoder_.backward(gz);
  }

  nn::Matrix<T> infer(const nn::Matrix<T>& in) const {
    require_shape(static_cast<std::size_t>(in.cols()) == cfg_.input_dim,
                  "generator input width " + std::to_string(in.cols()) + " != " + std::to_string(cfg_.input_dim));
    return decoder_.infer(encoder_.infer(in * scale_));
  }

  nn::Matrix<T> infer_logits(const nn::Matrix<T>& in) const {
    require(has_alignment_head(), "generator has no alignment head");
    return align_.infer(encoder_.infer(in * scale_));
  }

  std::vector<nn::Param<T>*> params() {
    auto p = encoder_.params();
    for (auto* q : align_.params()) p.push_back(q);
    for (auto* q : decoder_.params()) p.push_back(q);
    return p;
  }

  std::size_t parameter_count() { return encoder_.parameter_count() + align_.parameter_count() + decoder_.parameter_count(); }

 private:
  GeneratorConfig cfg_;
  T scale_ = 1;
  nn::Sequential<T> encoder_, align_, decoder_;
  nn::Matrix<T> z_, logits_;
};

/// Strided convolutional real/fake classifier with a sigmoid output.
template <class T>
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(ImageShape image, const std::vector<int>& channels, std::uint64_t seed) : channels_(channels) {
    require(!channels.empty(), "discriminator needs at least one conv block");
    Rng rng(seed);
    nn::SpatialShape s{image.channels, image.height, image.width};
    for (int c : channels) {
      auto& conv = net_.template emplace<nn::Conv2d<T>>(s, c, 3, 2, rng);
      s = conv.output_shape();
      net_.template emplace<nn::LeakyRelu<T>>(s.size(), 0.2);
    }
    net_.template emplace<nn::Dense<T>>(s.size(), 1, rng, 1.0);
    net_.template emplace<nn::Sigmoid<T>>(1);
  }

  nn::Matrix<T> forward(const nn::Matrix<T>& x) { return net_.forward(x, nn::Phase::train); }
  nn::Matrix<T> backward(const nn::Matrix<T>& g) { return net_.backward(g); }
  nn::Matrix<T> infer(const nn::Matrix<T>& x) const { return net_.infer(x); }

  /// Activations of the first conv block (optional perceptual features).
  nn::Matrix<T> features_forward(const nn::Matrix<T>& x) { return net_.forward_range(x, nn::Phase::train, 0, 2); }
  nn::Matrix<T> features_infer(const nn::Matrix<T>& x) const { return net_.infer_range(x, 0, 2); }
  nn::Matrix<T> features_backward(const nn::Matrix<T>& g) { return net_.backward_range(g, 0, 2); }

  std::vector<nn::Param<T>*> params() { return net_.params(); }
  void zero_grad() { net_.zero_grad(); }
  const std::vector<int>& channels() const noexcept { return channels_; }

 private:
  std::vector<int> channels_;
  nn::Sequential<T> net_;
};

/// Small convolutional classifier whose frozen trunk supplies perceptual features.
template <class T>
class PerceptualNet {
 public:
  PerceptualNet() = default;
  PerceptualNet(ImageShape image, const std::vector<int>& channels, std::size_t classes, std::uint64_t seed)
      : image_(image), channels_(channels) {
    require(!channels.empty() && classes >= 2, "perceptual net needs conv channels and at least two classes");
    Rng rng(seed);
    nn::SpatialShape s{image.channels, image.height, image.width};
    for (std::size_t i = 0; i < channels.size(); ++i) {
      auto& conv = trunk_.template emplace<nn::Conv2d<T>>(s, channels[i], 3, i == 0 ? 1 : 2, rng);
      s = conv.output_shape();
      trunk_.template emplace<nn::LeakyRelu<T>>(s.size());
    }
    head_.template emplace<nn::Dense<T>>(s.size(), classes, rng, 1.0);
  }

  ImageShape image() const noexcept { return image_; }
  const std::vector<int>& channels() const noexcept { return channels_; }
  std::size_t classes() const noexcept { return head_.output_width(); }

  nn::Matrix<T> features_forward(const nn::Matrix<T>& x) { return trunk_.forward(x, nn::Phase::train); }
  nn::Matrix<T> features_infer(const nn::Matrix<T>& x) const { return trunk_.infer(x); }
  nn::Matrix<T> features_backward(const nn::Matrix<T>& g) { return trunk_.backward(g); }

  nn::Sequential<T>& trunk() { return trunk_; }
  nn::Sequential<T>& head() { return head_; }
  const nn::Sequential<T>& head() const { return head_; }

  std::vector<nn::Param<T>*> params() {
    auto p = trunk_.params();
    for (auto* q : head_.params()) p.push_back(q);
    return p;
  }

 private:
  ImageShape image_;
  std::vector<int> channels_;
  nn::Sequential<T> trunk_, head_;
};

}  // namespace mmia::inv
